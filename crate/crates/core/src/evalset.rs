//! Evaluation-set construction: the confidence/overlap fairness filter, the
//! four-combination adversarial expansion, bias-mitigation report rows and
//! attention recall@k.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::{ConfidenceRecord, Corpus, ImageVariant, ModelTag, Sample, Variant, Violation};
use crate::embed::{ds_stats, DsError, Embedder};
use crate::text::{normalize, overlap_count, premise_tokens, um_stats, EmptyCorpus, PremiseKind, Stopwords};
use crate::variants::{SynthParts, VariantError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FairFilterCriteria {
    /// Max probability on the correct option, per model, indexed like [`ModelTag::ALL`].
    pub thresholds: [f64; 3],
    /// Max gap between the correct answer's overlap and the best distractor's;
    /// `None` disables the check.
    pub ngram_tolerance: Option<usize>,
    /// Also require the overlap balance against the visual premise.
    pub visual: bool,
    pub n_max: usize,
}

impl Default for FairFilterCriteria {
    fn default() -> Self {
        Self {
            thresholds: [0.25; 3],
            ngram_tolerance: Some(1),
            visual: false,
            n_max: 3,
        }
    }
}

impl FairFilterCriteria {
    pub fn threshold(&self, tag: ModelTag) -> f64 {
        self.thresholds[tag as usize]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(EvalError::Criteria("thresholds must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid criteria: {0}")]
    Criteria(&'static str),
    #[error("sample {sample_id:?} has no {model} confidence record")]
    MissingConfidence { sample_id: String, model: ModelTag },
    #[error("confidence record for sample {sample_id:?}: {violation}")]
    BadConfidence { sample_id: String, violation: Violation },
    #[error("confidence record for unknown sample {0:?}")]
    UnknownSample(String),
    #[error("duplicate {model} confidence record for sample {sample_id:?}")]
    DuplicateConfidence { sample_id: String, model: ModelTag },
    #[error(transparent)]
    Variant(#[from] VariantError),
}

/// Confidence records indexed by sample and model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Confidences(BTreeMap<(String, ModelTag), Vec<f64>>);

impl Confidences {
    /// Indexes records, checking each against its sample's option count.
    pub fn new(corpus: &Corpus, records: Vec<ConfidenceRecord>) -> Result<Self, EvalError> {
        let mut map = BTreeMap::new();
        for r in records {
            let s = corpus
                .get(&r.sample_id)
                .ok_or_else(|| EvalError::UnknownSample(r.sample_id.clone()))?;
            if let Some(v) = r.validate(s.options.len()).into_iter().next() {
                return Err(EvalError::BadConfidence {
                    sample_id: r.sample_id,
                    violation: v,
                });
            }
            let key = (r.sample_id, r.model);
            if map.contains_key(&key) {
                return Err(EvalError::DuplicateConfidence {
                    sample_id: key.0,
                    model: key.1,
                });
            }
            map.insert(key, r.probs);
        }
        Ok(Self(map))
    }

    pub fn get(&self, sample_id: &str, model: ModelTag) -> Option<&[f64]> {
        self.0.get(&(String::from(sample_id), model)).map(Vec::as_slice)
    }
}

/// `|O(correct) - max O(distractor)|` against one premise.
pub fn overlap_gap(sample: &Sample, kind: PremiseKind, n_max: usize) -> usize {
    let p = premise_tokens(sample, kind);
    let o = |i: usize| overlap_count(&normalize(&sample.options[i].text), &p, n_max);
    let c = o(sample.correct);
    let d = sample.distractor_indices().map(o).max().unwrap_or(0);
    c.abs_diff(d)
}

/// Both fairness predicates for one sample, given its three confidence vectors
/// in [`ModelTag::ALL`] order.
pub fn is_fair(sample: &Sample, probs: [&[f64]; 3], criteria: &FairFilterCriteria) -> bool {
    let confident = ModelTag::ALL
        .iter()
        .zip(probs)
        .any(|(tag, p)| p[sample.correct] > criteria.threshold(*tag));
    if confident {
        return false;
    }
    match criteria.ngram_tolerance {
        None => true,
        Some(tol) => {
            overlap_gap(sample, PremiseKind::Text, criteria.n_max) <= tol
                && (!criteria.visual || overlap_gap(sample, PremiseKind::Visual, criteria.n_max) <= tol)
        }
    }
}

/// Samples that no probe model answers confidently and whose correct answer
/// does not out-match its distractors by more than the tolerance.
pub fn filter_fair(
    corpus: &Corpus,
    confidences: &Confidences,
    criteria: &FairFilterCriteria,
) -> Result<Vec<Sample>, EvalError> {
    criteria.validate()?;
    let mut out = Vec::new();
    for s in corpus {
        let mut probs: [&[f64]; 3] = [&[]; 3];
        for (slot, tag) in probs.iter_mut().zip(ModelTag::ALL) {
            *slot = confidences
                .get(&s.id, tag)
                .ok_or_else(|| EvalError::MissingConfidence {
                    sample_id: s.id.clone(),
                    model: tag,
                })?;
        }
        if is_fair(s, probs, criteria) {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// The four evaluation combinations, in output order.
pub const ADVERSARIAL_COMBINATIONS: [Variant; 4] = [
    Variant {
        image: ImageVariant::Original,
        positive_answer: true,
        negative_answers: true,
    },
    Variant {
        image: ImageVariant::Positive,
        positive_answer: false,
        negative_answers: false,
    },
    Variant {
        image: ImageVariant::Original,
        positive_answer: true,
        negative_answers: false,
    },
    Variant {
        image: ImageVariant::Original,
        positive_answer: false,
        negative_answers: true,
    },
];

/// Four derived samples per input, each tagged with its parent and combination.
pub fn build_adversarial(subset: &[Sample], parts: &BTreeMap<String, SynthParts>) -> Result<Vec<Sample>, EvalError> {
    let empty = SynthParts::default();
    let mut out = Vec::with_capacity(subset.len() * 4);
    for s in subset {
        let p = parts.get(&s.id).unwrap_or(&empty);
        for v in ADVERSARIAL_COMBINATIONS {
            out.push(p.compose(s, v)?);
        }
    }
    Ok(out)
}

/// Bias statistics for one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MitigationRow {
    pub name: String,
    pub samples: usize,
    pub text_correct: f64,
    pub text_distractor: f64,
    pub visual_correct: f64,
    pub visual_distractor: f64,
    pub sim_cd: f64,
    pub sim_dd: Option<f64>,
}

impl MitigationRow {
    /// `C_c - C_d` on the text premise.
    pub fn text_gap(&self) -> f64 {
        self.text_correct - self.text_distractor
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError<E> {
    #[error(transparent)]
    Empty(#[from] EmptyCorpus),
    #[error(transparent)]
    Similarity(DsError<E>),
}

pub fn mitigation_row<E: Embedder>(
    name: &str,
    corpus: &Corpus,
    embedder: &E,
    stopwords: &Stopwords,
    n_max: usize,
) -> Result<MitigationRow, ReportError<E::Error>> {
    let t = um_stats(corpus, PremiseKind::Text, stopwords, n_max)?;
    let v = um_stats(corpus, PremiseKind::Visual, stopwords, n_max)?;
    let ds = ds_stats(corpus, embedder, 1).map_err(ReportError::Similarity)?;
    Ok(MitigationRow {
        name: String::from(name),
        samples: corpus.len(),
        text_correct: t.c_correct,
        text_distractor: t.c_distractor,
        visual_correct: v.c_correct,
        visual_distractor: v.c_distractor,
        sim_cd: ds.sim_cd,
        sim_dd: ds.sim_dd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum RecallError {
    #[error("{weights} attention weights for {entities} entities")]
    Length { weights: usize, entities: usize },
    #[error("k must be at least 1")]
    ZeroK,
}

/// Whether any ground-truth entity ranks in the top `k` by attention (ties
/// go to the earlier entity). `None` when there is no ground truth.
pub fn recall_at_k(
    attention: &[f64],
    entities: &[String],
    ground_truth: &[String],
    k: usize,
) -> Result<Option<bool>, RecallError> {
    if attention.len() != entities.len() {
        return Err(RecallError::Length {
            weights: attention.len(),
            entities: entities.len(),
        });
    }
    if k == 0 {
        return Err(RecallError::ZeroK);
    }
    if ground_truth.is_empty() {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..attention.len()).collect();
    order.sort_by(|&a, &b| attention[b].total_cmp(&attention[a]).then(a.cmp(&b)));
    Ok(Some(order.iter().take(k).any(|&i| ground_truth.contains(&entities[i]))))
}

/// Mean recall over the samples that have ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallSummary {
    pub recall: Option<f64>,
    pub counted: usize,
    pub skipped: usize,
}

pub fn mean_recall(hits: impl IntoIterator<Item = Option<bool>>) -> RecallSummary {
    let (mut n, mut h, mut skipped) = (0usize, 0usize, 0usize);
    for x in hits {
        match x {
            Some(b) => {
                n += 1;
                h += usize::from(b);
            }
            None => skipped += 1,
        }
    }
    RecallSummary {
        recall: (n > 0).then(|| h as f64 / n as f64),
        counted: n,
        skipped,
    }
}
