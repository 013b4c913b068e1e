//! Data model for multiple-choice VQA corpora and their synthesized variants.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

/// One answer option, stored pre-tokenized.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerOption {
    pub text: Vec<String>,
}

impl AnswerOption {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            text: tokens.into_iter().map(Into::into).collect(),
        }
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.text.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relevance {
    Relevant,
    Irrelevant,
    Unknown,
}

/// Region geometry in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Box { x0: f64, y0: f64, x1: f64, y1: f64 },
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    /// Absolute area (shoelace formula for polygons).
    pub fn area(&self) -> f64 {
        match self {
            Shape::Box { x0, y0, x1, y1 } => (x1 - x0).max(0.0) * (y1 - y0).max(0.0),
            Shape::Polygon(pts) => polygon_signed_area(pts).abs(),
        }
    }

    /// `(min_x, min_y, max_x, max_y)` over the shape's vertices.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Box { x0, y0, x1, y1 } => (*x0, *y0, *x1, *y1),
            Shape::Polygon(pts) => pts.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
            ),
        }
    }

    /// Closed-set point containment (boundary counts as inside).
    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        match self {
            Shape::Box { x0, y0, x1, y1 } => px >= *x0 && px <= *x1 && py >= *y0 && py <= *y1,
            Shape::Polygon(pts) => point_in_polygon(pts, px, py),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: String,
    pub shape: Shape,
    pub relevance: Option<Relevance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualPremise {
    pub image: Option<String>,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<Region>,
    pub caption: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ImageVariant {
    Original,
    /// Irrelevant regions removed (I+).
    Positive,
    /// Relevant regions removed (I−).
    Negative,
}

/// Which synthesized components a sample carries.
///
/// The four single-component tags are `I+`, `I-`, `A+` and `A-`. Evaluation
/// combinations concatenate them in image, positive-answer, negative-answer
/// order, e.g. `A+A-`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Variant {
    pub image: ImageVariant,
    /// Correct option replaced by the synthesized positive answer.
    pub positive_answer: bool,
    /// Distractors replaced by synthesized negative answers.
    pub negative_answers: bool,
}

impl Variant {
    pub const IMAGE_POSITIVE: Variant = Variant {
        image: ImageVariant::Positive,
        positive_answer: false,
        negative_answers: false,
    };
    pub const IMAGE_NEGATIVE: Variant = Variant {
        image: ImageVariant::Negative,
        positive_answer: false,
        negative_answers: false,
    };
    pub const ANSWER_POSITIVE: Variant = Variant {
        image: ImageVariant::Original,
        positive_answer: true,
        negative_answers: false,
    };
    pub const ANSWER_NEGATIVE: Variant = Variant {
        image: ImageVariant::Original,
        positive_answer: false,
        negative_answers: true,
    };

    pub fn is_empty(&self) -> bool {
        self.image == ImageVariant::Original && !self.positive_answer && !self.negative_answers
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.image {
            ImageVariant::Original => {}
            ImageVariant::Positive => f.write_str("I+")?,
            ImageVariant::Negative => f.write_str("I-")?,
        }
        if self.positive_answer {
            f.write_str("A+")?;
        }
        if self.negative_answers {
            f.write_str("A-")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant tag {0:?}")]
pub struct ParseVariantError(pub String);

impl FromStr for Variant {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseVariantError(s.to_string());
        let mut v = Variant {
            image: ImageVariant::Original,
            positive_answer: false,
            negative_answers: false,
        };
        let mut rest = s;
        if let Some(r) = rest.strip_prefix("I+") {
            v.image = ImageVariant::Positive;
            rest = r;
        } else if let Some(r) = rest.strip_prefix("I-") {
            v.image = ImageVariant::Negative;
            rest = r;
        }
        if let Some(r) = rest.strip_prefix("A+") {
            v.positive_answer = true;
            rest = r;
        }
        if let Some(r) = rest.strip_prefix("A-") {
            v.negative_answers = true;
            rest = r;
        }
        if !rest.is_empty() || v.is_empty() {
            return Err(err());
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Original,
    Synthesized {
        parent: Option<String>,
        variant: Option<Variant>,
    },
}

impl Provenance {
    pub fn synthesized(parent: impl Into<String>, variant: Variant) -> Self {
        Provenance::Synthesized {
            parent: Some(parent.into()),
            variant: Some(variant),
        }
    }

    pub fn parent(&self) -> Option<&str> {
        match self {
            Provenance::Original => None,
            Provenance::Synthesized { parent, .. } => parent.as_deref(),
        }
    }

    pub fn variant(&self) -> Option<Variant> {
        match self {
            Provenance::Original => None,
            Provenance::Synthesized { variant, .. } => *variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub question: Vec<String>,
    pub options: Vec<AnswerOption>,
    pub correct: usize,
    pub visual: VisualPremise,
    pub provenance: Provenance,
}

impl Sample {
    pub fn correct_option(&self) -> &AnswerOption {
        &self.options[self.correct]
    }

    /// Indices of the incorrect options, in order.
    pub fn distractor_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.options.len()).filter(move |&i| i != self.correct)
    }

    pub fn distractors(&self) -> impl Iterator<Item = &AnswerOption> + '_ {
        self.distractor_indices().map(move |i| &self.options[i])
    }
}

/// One broken invariant, located by field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every sample-level invariant. An empty result means the sample is valid.
pub fn validate_sample(s: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.id.is_empty() {
        out.push(Violation::new("Sample.id", "id must be non-empty"));
    }
    if s.options.len() < 2 {
        out.push(Violation::new(
            "Sample.options",
            format!("needs at least 2 options, found {}", s.options.len()),
        ));
    }
    if s.correct >= s.options.len() {
        out.push(Violation::new(
            "Sample.correct_index",
            format!(
                "correct_index {} out of range for {} options",
                s.correct,
                s.options.len()
            ),
        ));
    }
    for (i, opt) in s.options.iter().enumerate() {
        if opt.text.is_empty() || opt.text.iter().all(|t| t.is_empty()) {
            out.push(Violation::new(
                format!("Sample.options[{i}].text"),
                "option text must be non-empty",
            ));
        }
    }
    if let Provenance::Synthesized { parent, .. } = &s.provenance {
        if parent.as_deref().is_none_or(str::is_empty) {
            out.push(Violation::new(
                "Sample.provenance.parent",
                "synthesized sample must carry a parent id",
            ));
        }
    }
    validate_visual(&s.visual, &mut out);
    out
}

fn validate_visual(v: &VisualPremise, out: &mut Vec<Violation>) {
    if v.width == 0 || v.height == 0 {
        out.push(Violation::new(
            "VisualPremise.size",
            "width and height must be positive",
        ));
    }
    let (w, h) = (f64::from(v.width), f64::from(v.height));
    for (i, r) in v.objects.iter().enumerate() {
        if r.label.trim().is_empty() {
            out.push(Violation::new(
                format!("Region[{i}].label"),
                "label must be a non-empty string",
            ));
        }
        match &r.shape {
            Shape::Box { x0, y0, x1, y1 } => {
                if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) {
                    out.push(Violation::new("Region.shape", "box coordinates must be finite"));
                    continue;
                }
                if x1 <= x0 || y1 <= y0 {
                    out.push(Violation::new("Region.shape", "box needs x1>x0 and y1>y0"));
                }
            }
            Shape::Polygon(pts) => {
                if pts.len() < 3 {
                    out.push(Violation::new("Region.shape", "polygon needs ≥3 vertices"));
                    continue;
                }
                if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    out.push(Violation::new("Region.shape", "polygon coordinates must be finite"));
                    continue;
                }
                if polygon_signed_area(pts) == 0.0 {
                    out.push(Violation::new("Region.shape", "polygon must have positive area"));
                } else if !polygon_is_simple(pts) {
                    out.push(Violation::new(
                        "Region.shape",
                        "polygon must be simple (non-self-intersecting)",
                    ));
                }
            }
        }
        let (x0, y0, x1, y1) = r.shape.bounds();
        if x0 < 0.0 || y0 < 0.0 || x1 > w || y1 > h {
            out.push(Violation::new(
                format!("Region[{i}].shape"),
                format!("region must lie inside [0,{w}]x[0,{h}]"),
            ));
        }
    }
}

pub(crate) fn polygon_signed_area(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

pub(crate) fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// True when no two edges meet except adjacent edges at their shared vertex.
pub fn polygon_is_simple(pts: &[(f64, f64)]) -> bool {
    let n = pts.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (pts[i], pts[(i + 1) % n]);
    for i in 0..n {
        let (a, b) = edge(i);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Shared vertex is allowed; folding back along the same line is not.
                let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                if orient(shared, p, q) == 0.0 {
                    let dot = (p.0 - shared.0) * (q.0 - shared.0) + (p.1 - shared.1) * (q.1 - shared.1);
                    if dot > 0.0 {
                        return false;
                    }
                }
            } else if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

/// Closed-set point-in-polygon: boundary points count as inside.
pub(crate) fn point_in_polygon(pts: &[(f64, f64)], px: f64, py: f64) -> bool {
    let n = pts.len();
    let mut inside = false;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        if orient(a, b, (px, py)) == 0.0 && on_segment(a, b, (px, py)) {
            return true;
        }
        if (a.1 > py) != (b.1 > py) {
            let x_cross = a.0 + (py - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if px < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id:?}: {violation}")]
    Invalid { id: String, violation: Violation },
}

/// A validated, ordered collection of samples with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    samples: Vec<Sample>,
    index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>) -> Result<Self, CorpusError> {
        let mut index = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            if let Some(v) = validate_sample(s).into_iter().next() {
                return Err(CorpusError::Invalid {
                    id: s.id.clone(),
                    violation: v,
                });
            }
            if index.insert(s.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self { samples, index })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.index.get(id).map(|&i| &self.samples[i])
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Sample> {
        self.samples.iter()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Sample;
    type IntoIter = core::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelTag {
    /// Question + answers, no image.
    QuestionAnswer,
    /// Image + answers, no question.
    ImageAnswer,
    AnswerOnly,
}

impl ModelTag {
    pub const ALL: [ModelTag; 3] = [ModelTag::QuestionAnswer, ModelTag::ImageAnswer, ModelTag::AnswerOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::QuestionAnswer => "QA",
            ModelTag::ImageAnswer => "IA",
            ModelTag::AnswerOnly => "AO",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "QA" => Ok(ModelTag::QuestionAnswer),
            "IA" => Ok(ModelTag::ImageAnswer),
            "AO" => Ok(ModelTag::AnswerOnly),
            other => Err(ParseVariantError(other.to_string())),
        }
    }
}

/// A probe model's probability vector over one sample's options.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRecord {
    pub sample_id: String,
    pub model: ModelTag,
    pub probs: Vec<f64>,
}

impl ConfidenceRecord {
    /// Checks the probability vector against the sample's option count.
    pub fn validate(&self, option_count: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.probs.len() != option_count {
            out.push(Violation::new(
                "ConfidenceRecord.p",
                format!(
                    "length {} does not match option count {}",
                    self.probs.len(),
                    option_count
                ),
            ));
        }
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            out.push(Violation::new("ConfidenceRecord.p", "probabilities must lie in [0,1]"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            out.push(Violation::new(
                "ConfidenceRecord.p",
                format!("probabilities sum to {sum}, expected 1"),
            ));
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    pub(crate) fn sample(id: &str, question: &str, options: &[&str], correct: usize) -> Sample {
        Sample {
            id: id.into(),
            question: toks(question),
            options: options.iter().map(|o| AnswerOption::new(toks(o))).collect(),
            correct,
            visual: VisualPremise {
                image: None,
                width: 224,
                height: 224,
                objects: Vec::new(),
                caption: None,
            },
            provenance: Provenance::Original,
        }
    }

    #[test]
    fn well_formed_sample_has_no_violations() {
        let s = sample("a", "why is person2 here", &["a b", "c d", "e f", "g h"], 1);
        assert!(validate_sample(&s).is_empty());
    }

    #[test]
    fn two_vertex_polygon_is_rejected() {
        let mut s = sample("a", "q", &["a", "b"], 0);
        s.visual.objects.push(Region {
            label: "cup".into(),
            shape: Shape::Polygon(vec![(1.0, 1.0), (5.0, 5.0)]),
            relevance: None,
        });
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].to_string(), "Region.shape: polygon needs ≥3 vertices");
    }

    #[test]
    fn synthesized_without_parent_is_one_violation() {
        let mut s = sample("a", "q", &["a", "b"], 0);
        s.provenance = Provenance::Synthesized {
            parent: None,
            variant: Some(Variant::ANSWER_NEGATIVE),
        };
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "Sample.provenance.parent");
    }

    #[test]
    fn correct_index_out_of_range_names_field() {
        let s = sample("a", "q", &["a", "b", "c", "d"], 4);
        let v = validate_sample(&s);
        assert!(v.iter().any(|v| v.field == "Sample.correct_index"));
    }

    #[test]
    fn bow_tie_polygon_is_not_simple() {
        let bow = [(0.0, 0.0), (4.0, 4.0), (4.0, 0.0), (0.0, 4.0)];
        assert!(!polygon_is_simple(&bow));
        let square = [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)];
        assert!(polygon_is_simple(&square));
        let tri = [(1.0, 1.0), (3.0, 2.0), (2.0, 4.0)];
        assert!(polygon_is_simple(&tri));
    }

    #[test]
    fn region_outside_image_is_flagged() {
        let mut s = sample("a", "q", &["a", "b"], 0);
        s.visual.objects.push(Region {
            label: "cup".into(),
            shape: Shape::Box {
                x0: 200.0,
                y0: 0.0,
                x1: 230.0,
                y1: 10.0,
            },
            relevance: None,
        });
        assert_eq!(validate_sample(&s).len(), 1);
    }

    #[test]
    fn variant_tags_round_trip() {
        for tag in ["A+", "A-", "I+", "I-", "A+A-", "I+A+", "I+A-", "I+A+A-"] {
            let v: Variant = tag.parse().unwrap();
            assert_eq!(v.to_string(), tag);
        }
        assert!("".parse::<Variant>().is_err());
        assert!("A-A+".parse::<Variant>().is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let a = sample("x", "q", &["a", "b"], 0);
        let err = Corpus::new(vec![a.clone(), a]).unwrap_err();
        assert_eq!(err, CorpusError::DuplicateId("x".into()));
    }

    #[test]
    fn confidence_record_checks() {
        let r = ConfidenceRecord {
            sample_id: "x".into(),
            model: ModelTag::AnswerOnly,
            probs: vec![0.25, 0.25, 0.5],
        };
        assert!(r.validate(3).is_empty());
        assert_eq!(r.validate(4).len(), 1);
    }
}
