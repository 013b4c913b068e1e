//! JSON-lines wire formats: corpora, confidence, attention and exemplar
//! files, and the training-pair output.

use std::collections::HashMap;
use std::fmt;

use debias_core::corpus::{
    validate_sample, AnswerOption, ConfidenceRecord, Corpus, ImageVariant, ModelTag, Provenance, Region, Relevance,
    Sample, Shape, Variant, VisualPremise,
};
use debias_core::ict::{Anchor, ContrastiveTriple, Member, TrainingPairSet, XePair};
use debias_core::matching::Exemplar;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A located problem in a JSON-lines file. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl LineError {
    fn at(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line,
            field: Some(field.into()),
            message: message.into(),
        }
    }
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: {}: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl std::error::Error for LineError {}

/// Parses every non-blank line as one `T`. Errors name the offending field
/// path when the JSON is well-formed but does not fit the schema.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>, LineError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = i + 1;
        let de = &mut serde_json::Deserializer::from_str(raw);
        match serde_path_to_error::deserialize::<_, T>(de) {
            Ok(v) => out.push((line, v)),
            Err(e) => {
                let path = e.path().to_string();
                let inner = e.into_inner();
                let field = (path != ".").then_some(path);
                return Err(LineError {
                    line,
                    field,
                    message: inner.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Serializes records one per line, each terminated by a newline.
pub fn to_lines<T: Serialize>(records: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        // Plain data records always serialize.
        serde_json::to_writer(&mut out, &r).expect("record serializes");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    id: String,
    question: Vec<String>,
    options: Vec<OptionLine>,
    correct: usize,
    visual: VisualLine,
    prov: ProvLine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionLine {
    text: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VisualLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<String>,
    w: u32,
    h: u32,
    #[serde(default)]
    objects: Vec<RegionLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionLine {
    label: String,
    #[serde(rename = "box", default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rel: Option<RelLine>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RelLine {
    Relevant,
    Irrelevant,
    Unknown,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
enum ProvKind {
    #[serde(rename = "orig")]
    Orig,
    #[serde(rename = "synth")]
    Synth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvLine {
    kind: ProvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
}

fn region_from_line(r: RegionLine, i: usize, line: usize) -> Result<Region, LineError> {
    let field = || format!("visual.objects[{i}]");
    let shape = match (r.bbox, r.poly) {
        (Some([x0, y0, x1, y1]), None) => Shape::Box { x0, y0, x1, y1 },
        (None, Some(pts)) => Shape::Polygon(pts.into_iter().map(|[x, y]| (x, y)).collect()),
        _ => return Err(LineError::at(line, field(), "exactly one of box or poly is required")),
    };
    Ok(Region {
        label: r.label,
        shape,
        relevance: r.rel.map(|r| match r {
            RelLine::Relevant => Relevance::Relevant,
            RelLine::Irrelevant => Relevance::Irrelevant,
            RelLine::Unknown => Relevance::Unknown,
        }),
    })
}

fn sample_from_line(s: SampleLine, line: usize) -> Result<Sample, LineError> {
    let provenance = match s.prov.kind {
        ProvKind::Orig => {
            if s.prov.parent.is_some() || s.prov.tag.is_some() {
                return Err(LineError::at(line, "prov", "original samples carry no parent or tag"));
            }
            Provenance::Original
        }
        ProvKind::Synth => {
            let variant = match s.prov.tag {
                Some(t) => Some(
                    t.parse::<Variant>()
                        .map_err(|e| LineError::at(line, "prov.tag", e.to_string()))?,
                ),
                None => None,
            };
            Provenance::Synthesized {
                parent: s.prov.parent,
                variant,
            }
        }
    };
    let objects = s
        .visual
        .objects
        .into_iter()
        .enumerate()
        .map(|(i, r)| region_from_line(r, i, line))
        .collect::<Result<_, _>>()?;
    Ok(Sample {
        id: s.id,
        question: s.question,
        options: s.options.into_iter().map(|o| AnswerOption { text: o.text }).collect(),
        correct: s.correct,
        visual: VisualPremise {
            image: s.visual.image,
            width: s.visual.w,
            height: s.visual.h,
            objects,
            caption: s.visual.caption,
        },
        provenance,
    })
}

fn sample_to_line(s: &Sample) -> SampleLine {
    let objects = s
        .visual
        .objects
        .iter()
        .map(|r| {
            let (bbox, poly) = match &r.shape {
                Shape::Box { x0, y0, x1, y1 } => (Some([*x0, *y0, *x1, *y1]), None),
                Shape::Polygon(pts) => (None, Some(pts.iter().map(|&(x, y)| [x, y]).collect())),
            };
            RegionLine {
                label: r.label.clone(),
                bbox,
                poly,
                rel: r.relevance.map(|r| match r {
                    Relevance::Relevant => RelLine::Relevant,
                    Relevance::Irrelevant => RelLine::Irrelevant,
                    Relevance::Unknown => RelLine::Unknown,
                }),
            }
        })
        .collect();
    let prov = match &s.provenance {
        Provenance::Original => ProvLine {
            kind: ProvKind::Orig,
            parent: None,
            tag: None,
        },
        Provenance::Synthesized { parent, variant } => ProvLine {
            kind: ProvKind::Synth,
            parent: parent.clone(),
            tag: variant.map(|v| v.to_string()),
        },
    };
    SampleLine {
        id: s.id.clone(),
        question: s.question.clone(),
        options: s.options.iter().map(|o| OptionLine { text: o.text.clone() }).collect(),
        correct: s.correct,
        visual: VisualLine {
            image: s.visual.image.clone(),
            w: s.visual.width,
            h: s.visual.height,
            objects,
            caption: s.visual.caption.clone(),
        },
        prov,
    }
}

/// Parses and validates a corpus file. An empty file is an empty corpus.
pub fn parse_corpus(text: &str) -> Result<Corpus, LineError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut samples = Vec::new();
    for (line, rec) in parse_lines::<SampleLine>(text)? {
        let s = sample_from_line(rec, line)?;
        if let Some(v) = validate_sample(&s).into_iter().next() {
            return Err(LineError::at(line, v.field, v.rule));
        }
        if let Some(first) = seen.insert(s.id.clone(), line) {
            return Err(LineError::at(
                line,
                "id",
                format!("duplicate sample id {:?} (first on line {first})", s.id),
            ));
        }
        samples.push(s);
    }
    // Every sample was validated and ids are unique.
    Corpus::new(samples).map_err(|e| LineError {
        line: 0,
        field: None,
        message: e.to_string(),
    })
}

pub fn write_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Vec<u8> {
    to_lines(samples.into_iter().map(sample_to_line))
}

pub fn write_corpus(corpus: &Corpus) -> Vec<u8> {
    write_samples(corpus.samples())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfidenceLine {
    id: String,
    model: String,
    p: Vec<f64>,
}

pub fn parse_confidences(text: &str) -> Result<Vec<ConfidenceRecord>, LineError> {
    parse_lines::<ConfidenceLine>(text)?
        .into_iter()
        .map(|(line, c)| {
            let model: ModelTag = c
                .model
                .parse()
                .map_err(|_| LineError::at(line, "model", format!("unknown model tag {:?}", c.model)))?;
            Ok(ConfidenceRecord {
                sample_id: c.id,
                model,
                probs: c.p,
            })
        })
        .collect()
}

pub fn write_confidences(records: &[ConfidenceRecord]) -> Vec<u8> {
    to_lines(records.iter().map(|r| ConfidenceLine {
        id: r.sample_id.clone(),
        model: r.model.to_string(),
        p: r.probs.clone(),
    }))
}

/// Per-sample attention over visual entities, with optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionRecord {
    pub id: String,
    pub entities: Vec<String>,
    pub attn: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gt: Vec<String>,
}

pub fn parse_attention(text: &str) -> Result<Vec<(usize, AttentionRecord)>, LineError> {
    parse_lines(text)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExemplarLine {
    question: String,
    answer: String,
    distractors: Vec<String>,
}

pub fn parse_exemplars(text: &str) -> Result<Vec<Exemplar>, LineError> {
    Ok(parse_lines::<ExemplarLine>(text)?
        .into_iter()
        .map(|(_, e)| Exemplar {
            question: e.question,
            answer: e.answer,
            distractors: e.distractors,
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct XeLine {
    /// Empty for the original pair.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    pub question: Vec<String>,
    pub options: Vec<Vec<String>>,
    pub label: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TripleLine {
    /// `IQ` contrasts answers, `QA` contrasts images.
    pub anchor: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairSetLine {
    pub id: String,
    pub xe: Vec<XeLine>,
    pub triples: Vec<TripleLine>,
}

fn member_name(m: &Member) -> String {
    match m {
        Member::CorrectAnswer => "Ac".into(),
        Member::PositiveAnswer => "A+".into(),
        Member::NegativeAnswer(k) => format!("A-{k}"),
        Member::Image(ImageVariant::Original) => "I".into(),
        Member::Image(ImageVariant::Positive) => "I+".into(),
        Member::Image(ImageVariant::Negative) => "I-".into(),
    }
}

fn xe_line(p: &XePair) -> XeLine {
    XeLine {
        variant: if p.variant.is_empty() {
            String::new()
        } else {
            p.variant.to_string()
        },
        image: p.image.clone(),
        question: p.question.clone(),
        options: p.options.iter().map(|o| o.text.clone()).collect(),
        label: p.label,
    }
}

fn triple_line(t: &ContrastiveTriple) -> TripleLine {
    TripleLine {
        anchor: match t.anchor {
            Anchor::ImageQuestion => "IQ".into(),
            Anchor::QuestionAnswer => "QA".into(),
        },
        positives: t.positives.iter().map(member_name).collect(),
        negatives: t.negatives.iter().map(member_name).collect(),
    }
}

pub fn pair_set_line(p: &TrainingPairSet) -> PairSetLine {
    PairSetLine {
        id: p.sample_id.clone(),
        xe: p.xe_pairs.iter().map(xe_line).collect(),
        triples: p.triples.iter().map(triple_line).collect(),
    }
}
