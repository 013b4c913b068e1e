//! Training objectives: cross-entropy, the intra-sample InfoNCE losses with
//! analytic gradients, a finite-difference checker, and enumeration of the
//! training pairs an augmented sample contributes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnswerOption, ImageVariant, Sample, Variant};
use crate::embed::{dot, norm};
use crate::variants::{SynthParts, VariantError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("need at least 2 logits")]
    TooFewClasses,
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("vector dimensions differ")]
    Dimension,
    #[error("temperature must be positive and finite")]
    Temperature,
    #[error("need at least one positive and one negative")]
    EmptyBatch,
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn xe_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), LossError> {
    if logits.len() < 2 {
        return Err(LossError::TooFewClasses);
    }
    if label >= logits.len() {
        return Err(LossError::Label {
            label,
            classes: logits.len(),
        });
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| libm::exp(l - m)).sum();
    let lse = m + libm::log(z);
    let mut grad: Vec<f64> = logits.iter().map(|l| libm::exp(l - lse)).collect();
    grad[label] -= 1.0;
    Ok((lse - logits[label], grad))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

/// Cosine of `u` and `v` with its gradients with respect to each.
fn cosine_with_grads(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), LossError> {
    if u.len() != v.len() {
        return Err(LossError::Dimension);
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(LossError::ZeroNorm);
    }
    let c = dot(u, v) / (nu * nv);
    let gu = u
        .iter()
        .zip(v)
        .map(|(a, b)| b / (nu * nv) - c * a / (nu * nu))
        .collect();
    let gv = u
        .iter()
        .zip(v)
        .map(|(a, b)| a / (nu * nv) - c * b / (nv * nv))
        .collect();
    Ok((c, gu, gv))
}

/// InfoNCE value and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Nce {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

/// Two-way InfoNCE with cosine similarity as the score:
/// `-log(e^{s_p/τ} / (e^{s_p/τ} + e^{s_n/τ}))`.
pub fn info_nce(z: &[f64], z_p: &[f64], z_n: &[f64], tau: f64) -> Result<Nce, LossError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LossError::Temperature);
    }
    let (sp, gz_p, gp) = cosine_with_grads(z, z_p)?;
    let (sn, gz_n, gn) = cosine_with_grads(z, z_n)?;
    let d = (sn - sp) / tau;
    let w = sigmoid(d) / tau;
    Ok(Nce {
        loss: softplus(d),
        grad_anchor: gz_p.iter().zip(&gz_n).map(|(a, b)| w * (b - a)).collect(),
        grad_positive: gp.iter().map(|g| -w * g).collect(),
        grad_negative: gn.iter().map(|g| w * g).collect(),
    })
}

/// One anchor with its positives and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct IctBatch {
    pub anchor: Vec<f64>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IctGrads {
    pub loss: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positives: Vec<Vec<f64>>,
    pub grad_negatives: Vec<Vec<f64>>,
}

/// Mean InfoNCE over every positive/negative pair of the batch.
pub fn ict_loss(batch: &IctBatch) -> Result<IctGrads, LossError> {
    if batch.positives.is_empty() || batch.negatives.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let d = batch.anchor.len();
    let pairs = (batch.positives.len() * batch.negatives.len()) as f64;
    let mut out = IctGrads {
        loss: 0.0,
        grad_anchor: vec![0.0; d],
        grad_positives: vec![vec![0.0; d]; batch.positives.len()],
        grad_negatives: vec![vec![0.0; d]; batch.negatives.len()],
    };
    let add = |acc: &mut Vec<f64>, g: &[f64]| acc.iter_mut().zip(g).for_each(|(a, b)| *a += b / pairs);
    for (i, p) in batch.positives.iter().enumerate() {
        for (j, n) in batch.negatives.iter().enumerate() {
            let r = info_nce(&batch.anchor, p, n, batch.tau)?;
            out.loss += r.loss / pairs;
            add(&mut out.grad_anchor, &r.grad_anchor);
            add(&mut out.grad_positives[i], &r.grad_positive);
            add(&mut out.grad_negatives[j], &r.grad_negative);
        }
    }
    Ok(out)
}

/// `δ1·xe + δ2·(a_ict + i_ict)`.
pub fn combined_loss(xe: f64, a_ict: f64, i_ict: f64, delta1: f64, delta2: f64) -> f64 {
    delta1 * xe + delta2 * (a_ict + i_ict)
}

/// Largest relative error between `analytic` and central differences of
/// `f` at `point` with step `h`, as `|a - n| / max(1e-12, |n|)`.
pub fn fd_gradient_check<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], analytic: &[f64], h: f64) -> f64 {
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let up = f(&x);
        x[i] = point[i] - h;
        let down = f(&x);
        x[i] = point[i];
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-12);
        worst = worst.max(err);
    }
    worst
}

pub const FD_STEP: f64 = 1e-5;

/// Worst relative gradient errors over a randomized sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub cases: usize,
    pub xe_max: f64,
    pub info_nce_max: f64,
}

/// Checks `cases` random cross-entropy and InfoNCE instances (logits in
/// `[-3, 3]` over 2 to 6 classes; 8-dimensional vectors in `[-1, 1]`,
/// `τ` in `[0.1, 2]`) against central differences.
pub fn gradient_sweep(cases: usize, seed: u64) -> GradientReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xe_max = 0.0f64;
    let mut nce_max = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(2..=6);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let label = rng.random_range(0..k);
        if let Ok((_, g)) = xe_loss(&logits, label) {
            let f = |x: &[f64]| xe_loss(x, label).map_or(f64::NAN, |r| r.0);
            xe_max = xe_max.max(fd_gradient_check(f, &logits, &g, FD_STEP));
        }

        let mut v = || -> Vec<f64> { (0..8).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let (z, zp, zn) = (v(), v(), v());
        let tau = rng.random_range(0.1..2.0);
        if let Ok(r) = info_nce(&z, &zp, &zn, tau) {
            let loss = |a: &[f64], p: &[f64], n: &[f64]| info_nce(a, p, n, tau).map_or(f64::NAN, |r| r.loss);
            let e = [
                fd_gradient_check(|x| loss(x, &zp, &zn), &z, &r.grad_anchor, FD_STEP),
                fd_gradient_check(|x| loss(&z, x, &zn), &zp, &r.grad_positive, FD_STEP),
                fd_gradient_check(|x| loss(&z, &zp, x), &zn, &r.grad_negative, FD_STEP),
            ];
            nce_max = e.iter().copied().fold(nce_max, f64::max);
        }
    }
    GradientReport {
        cases,
        xe_max,
        info_nce_max: nce_max,
    }
}

/// One classification example: an image variant with an option set.
#[derive(Debug, Clone, PartialEq)]
pub struct XePair {
    /// Which components replace the original ones.
    pub variant: Variant,
    pub image: Option<String>,
    pub question: Vec<String>,
    pub options: Vec<AnswerOption>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Anchor {
    /// Fused image and question; contrasts answers.
    ImageQuestion,
    /// Fused question and answer; contrasts images.
    QuestionAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Member {
    CorrectAnswer,
    PositiveAnswer,
    /// One of the synthesized negative answers.
    NegativeAnswer(usize),
    Image(ImageVariant),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveTriple {
    pub anchor: Anchor,
    pub positives: Vec<Member>,
    pub negatives: Vec<Member>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairSet {
    pub sample_id: String,
    /// The original pair first, then the seven recombinations.
    pub xe_pairs: Vec<XePair>,
    pub triples: Vec<ContrastiveTriple>,
}

/// Expands one augmented sample into its classification pairs and
/// contrastive triples. Needs `I+`, `I-`, `A+` and the negative answers.
/// The counterfactual image never enters a classification pair.
pub fn enumerate_training_pairs(original: &Sample, parts: &SynthParts) -> Result<TrainingPairSet, VariantError> {
    for v in [
        Variant::IMAGE_POSITIVE,
        Variant::IMAGE_NEGATIVE,
        Variant::ANSWER_POSITIVE,
        Variant::ANSWER_NEGATIVE,
    ] {
        parts.check(&original.id, v)?;
    }
    let mut xe_pairs = Vec::with_capacity(8);
    for image in [ImageVariant::Original, ImageVariant::Positive] {
        for positive_answer in [false, true] {
            for negative_answers in [false, true] {
                let variant = Variant {
                    image,
                    positive_answer,
                    negative_answers,
                };
                let s = parts.compose(original, variant)?;
                xe_pairs.push(XePair {
                    variant,
                    image: s.visual.image,
                    question: s.question,
                    options: s.options,
                    label: s.correct,
                });
            }
        }
    }
    // Order: original, then the four evaluation combinations, then the rest.
    let rank = |v: &Variant| match (v.image, v.positive_answer, v.negative_answers) {
        (ImageVariant::Original, false, false) => 0,
        (ImageVariant::Original, true, true) => 1,
        (ImageVariant::Positive, false, false) => 2,
        (ImageVariant::Original, true, false) => 3,
        (ImageVariant::Original, false, true) => 4,
        (ImageVariant::Positive, true, true) => 5,
        (ImageVariant::Positive, true, false) => 6,
        _ => 7,
    };
    xe_pairs.sort_by_key(|p| rank(&p.variant));

    let negs = parts.negative_answers.as_ref().map_or(0, Vec::len);
    let neg_members: Vec<Member> = (0..negs).map(Member::NegativeAnswer).collect();
    let triples = vec![
        ContrastiveTriple {
            anchor: Anchor::ImageQuestion,
            positives: vec![Member::CorrectAnswer],
            negatives: neg_members.clone(),
        },
        ContrastiveTriple {
            anchor: Anchor::ImageQuestion,
            positives: vec![Member::PositiveAnswer],
            negatives: neg_members,
        },
        ContrastiveTriple {
            anchor: Anchor::QuestionAnswer,
            positives: vec![
                Member::Image(ImageVariant::Original),
                Member::Image(ImageVariant::Positive),
            ],
            negatives: vec![Member::Image(ImageVariant::Negative)],
        },
    ];
    Ok(TrainingPairSet {
        sample_id: original.id.clone(),
        xe_pairs,
        triples,
    })
}
