use debias_core::corpus::Corpus;
use debias_core::text::{
    heuristic_solve, EmptyCorpus, HeuristicPolicy, PremiseKind, Stopwords, UmAccumulator, UmReport,
};
use rayon::prelude::*;
use serde::Serialize;

use super::{json_bytes, Ctx};
use crate::cli::{AuditArgs, HeuristicArgs, Policy, Premise};
use crate::error::{Error, Result};
use crate::io::Output;

/// Unbalanced-matching statistics with per-sample work spread over the
/// worker pool; the integer accumulators merge in any order.
pub fn um_stats_parallel(
    corpus: &Corpus,
    kind: PremiseKind,
    stopwords: &Stopwords,
    n_max: usize,
) -> Result<UmReport, EmptyCorpus> {
    corpus
        .samples()
        .par_iter()
        .fold(UmAccumulator::default, |mut acc, s| {
            acc.add(s, kind, stopwords, n_max);
            acc
        })
        .reduce(UmAccumulator::default, UmAccumulator::merge)
        .finish(kind)
}

#[derive(Serialize)]
struct AuditJson {
    premise: &'static str,
    ngram_max: usize,
    samples: usize,
    c_correct: f64,
    c_distractor: f64,
    mean_matched_correct: f64,
    mean_matched_distractor: f64,
    mean_irrelevant_correct: f64,
    mean_irrelevant_distractor: f64,
}

pub fn audit(ctx: &mut Ctx, a: &AuditArgs) -> Result<Vec<Output>> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    let kind = match a.premise {
        Premise::Text => PremiseKind::Text,
        Premise::Visual => PremiseKind::Visual,
    };
    let n = ctx.cfg.ngram_max;
    let r = um_stats_parallel(&corpus, kind, &ctx.stopwords, n).map_err(|e| Error::input(&a.corpus, e))?;
    println!(
        "{} premise, {} samples: C_c = {:.2}%, C_d = {:.2}%",
        kind.as_str(),
        r.samples,
        100.0 * r.c_correct,
        100.0 * r.c_distractor
    );
    let json = AuditJson {
        premise: kind.as_str(),
        ngram_max: n,
        samples: r.samples,
        c_correct: r.c_correct,
        c_distractor: r.c_distractor,
        mean_matched_correct: r.mean_matched_correct,
        mean_matched_distractor: r.mean_matched_distractor,
        mean_irrelevant_correct: r.mean_irrelevant_correct,
        mean_irrelevant_distractor: r.mean_irrelevant_distractor,
    };
    Ok(vec![Output::file(&a.out, json_bytes(&json))])
}

#[derive(Serialize)]
struct Prediction<'a> {
    id: &'a str,
    predicted: usize,
    correct: usize,
}

#[derive(Serialize)]
struct HeuristicJson<'a> {
    policy: &'static str,
    ngram_max: usize,
    samples: usize,
    accuracy: f64,
    predictions: Vec<Prediction<'a>>,
}

pub fn solve_heuristic(ctx: &mut Ctx, a: &HeuristicArgs) -> Result<Vec<Output>> {
    let corpus = ctx.load_corpus(&a.corpus)?;
    if corpus.is_empty() {
        return Err(Error::input(&a.corpus, EmptyCorpus));
    }
    let (policy, name) = match a.policy {
        Policy::Text => (HeuristicPolicy::Text, "text"),
        Policy::Visual => (HeuristicPolicy::Visual, "visual"),
        Policy::Combined => (HeuristicPolicy::Combined, "combined"),
    };
    let n = ctx.cfg.ngram_max;
    let predictions: Vec<Prediction> = corpus
        .samples()
        .par_iter()
        .map(|s| Prediction {
            id: &s.id,
            predicted: heuristic_solve(s, policy, n),
            correct: s.correct,
        })
        .collect();
    let hits = predictions.iter().filter(|p| p.predicted == p.correct).count();
    let accuracy = hits as f64 / predictions.len() as f64;
    println!(
        "{name} policy: {:.2}% ({hits}/{} samples)",
        100.0 * accuracy,
        predictions.len()
    );
    let Some(out) = &a.out else {
        return Ok(Vec::new());
    };
    let json = HeuristicJson {
        policy: name,
        ngram_max: n,
        samples: predictions.len(),
        accuracy,
        predictions,
    };
    Ok(vec![Output::file(out, json_bytes(&json))])
}
