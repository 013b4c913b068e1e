use std::collections::BTreeSet;

use debias_core::corpus::{Provenance, Sample};
use debias_core::matching::{
    assign_from_weights, build_paraphrase_prompt, parse_paraphrase, refine_distractors, text_variants, weight_row,
    DistractorAssignment, Exemplar, Generator, MatchError, RefineConfig, RefineError, DISTRACTORS_PER_SAMPLE,
    PROMPT_EXEMPLARS, PROMPT_TOP_K,
};
use debias_core::text::tokenize;
use rayon::prelude::*;

use super::Ctx;
use crate::cli::SynthTextArgs;
use crate::error::{Error, Result};
use crate::format;
use crate::io::Output;
use crate::providers::{AnyGenerator, AnyScorer, ProviderSpec};
use crate::remote::ProviderError;

/// Exemplars taken from the corpus itself when no pool file is given.
const DEFAULT_POOL: usize = 30;

fn match_error(e: MatchError<ProviderError>) -> Error {
    match e {
        MatchError::Provider { source, .. } => Error::Provider(source),
        other => Error::data(other),
    }
}

fn exemplar(s: &Sample) -> Exemplar {
    Exemplar {
        question: s.question.join(" "),
        answer: s.correct_option().joined(),
        distractors: s.distractors().map(|o| o.joined()).collect(),
    }
}

/// Assigned donors first (in round order), then the rest by weight; distinct
/// texts other than the sample's own answer, at most the prompt's top-k.
fn ranked_candidates(samples: &[Sample], a: &DistractorAssignment, i: usize) -> Vec<String> {
    let own = samples[i].correct_option().joined();
    let mut seen = BTreeSet::from([own]);
    let mut out = Vec::new();
    for j in a.donors(i).into_iter().chain(a.ranked_donors(i)) {
        let t = samples[j].correct_option().joined();
        if seen.insert(t.clone()) {
            out.push(t);
        }
        if out.len() == PROMPT_TOP_K {
            break;
        }
    }
    out
}

fn generator_output_error(spec: &ProviderSpec, message: String) -> Error {
    match spec {
        ProviderSpec::Builtin => Error::data(message),
        ProviderSpec::Remote(url) => Error::Provider(ProviderError::Malformed {
            url: format!("{}/generate", url.trim_end_matches('/')),
            message,
        }),
    }
}

pub fn synth_text(ctx: &mut Ctx, a: &SynthTextArgs) -> Result<Vec<Output>> {
    let seed = ctx.cfg.require_seed()?;
    let corpus = ctx.load_corpus(&a.corpus)?;
    let pool_file = match &a.exemplars {
        Some(p) => Some(format::parse_exemplars(&ctx.inputs.read_text(p)?).map_err(|e| Error::input(p, e))?),
        None => None,
    };
    let samples: Vec<Sample> = corpus
        .samples()
        .iter()
        .filter(|s| s.provenance == Provenance::Original)
        .cloned()
        .collect();
    let params = ctx.cfg.match_params();
    let need = params.rounds.max(DISTRACTORS_PER_SAMPLE) + 1;
    if samples.len() < need {
        return Err(Error::input(
            &a.corpus,
            format!("{} original samples; need at least {need}", samples.len()),
        ));
    }
    let spec = ProviderSpec::parse(&ctx.cfg.providers).map_err(Error::Usage)?;
    let net = ctx.cfg.network();
    let scorer = AnyScorer::new(&spec, net);
    let generator = AnyGenerator::new(&spec, net);

    let weights = (0..samples.len())
        .into_par_iter()
        .map(|i| weight_row(&samples, i, &params, &scorer))
        .collect::<Result<Vec<_>, _>>()
        .map_err(match_error)?;
    let assignment =
        assign_from_weights::<ProviderError, _>(&samples, weights, params.rounds, |_, _| false).map_err(match_error)?;
    log::info!("matched {} samples over {} rounds", samples.len(), params.rounds);

    let mut by_id: Vec<&Sample> = samples.iter().collect();
    by_id.sort_by(|x, y| x.id.cmp(&y.id));
    let default_pool = |i: usize| -> Vec<Exemplar> {
        by_id
            .iter()
            .filter(|s| s.id != samples[i].id)
            .take(DEFAULT_POOL)
            .map(|s| exemplar(s))
            .collect()
    };
    if let Some(p) = &pool_file {
        if p.len() < PROMPT_EXEMPLARS {
            return Err(Error::data(format!(
                "exemplar pool has {} entries, need at least {PROMPT_EXEMPLARS}",
                p.len()
            )));
        }
    }

    let thresholds = ctx.cfg.thresholds();
    let max_tokens = ctx.cfg.refine.max_tokens;
    let n_max = ctx.cfg.ngram_max;
    let stopwords = &ctx.stopwords;
    let results: Vec<(Sample, Sample, usize)> = (0..samples.len())
        .into_par_iter()
        .map(|i| -> Result<(Sample, Sample, usize)> {
            let s = &samples[i];
            let sample_seed = seed.wrapping_add(i as u64);
            let ranked = ranked_candidates(&samples, &assignment, i);
            let own_pool;
            let pool = match &pool_file {
                Some(p) => p.as_slice(),
                None => {
                    own_pool = default_pool(i);
                    own_pool.as_slice()
                }
            };
            let cfg = RefineConfig {
                thresholds,
                max_tokens,
                seed: sample_seed,
                n_max,
            };
            let refined =
                refine_distractors(s, &ranked, pool, &generator, &scorer, stopwords, &cfg).map_err(|e| match e {
                    RefineError::Generator(p) | RefineError::Scorer(p) => Error::Provider(p),
                    RefineError::Prompt(p) => generator_output_error(&spec, format!("sample {:?}: {p}", s.id)),
                    RefineError::NotEnoughCandidates(_) => Error::data(format!("sample {:?}: {e}", s.id)),
                })?;
            let text = generator.generate(&build_paraphrase_prompt(s), max_tokens, sample_seed)?;
            let positive = parse_paraphrase(&text)
                .map(|p| tokenize(&p))
                .map_err(|e| generator_output_error(&spec, format!("sample {:?}: {e}", s.id)))?;
            if positive.is_empty() {
                return Err(generator_output_error(
                    &spec,
                    format!("sample {:?}: empty paraphrase", s.id),
                ));
            }
            let validated = refined.validated();
            let (plus, minus) = text_variants(s, positive, refined.distractors);
            Ok((plus, minus, validated))
        })
        .collect::<Result<_>>()?;

    let validated: usize = results.iter().map(|r| r.2).sum();
    println!(
        "{} samples: {} of {} distractors pass all four checks",
        results.len(),
        validated,
        results.len() * DISTRACTORS_PER_SAMPLE
    );
    let bytes = format::write_samples(results.iter().flat_map(|(p, m, _)| [p, m]));
    Ok(vec![Output::file(&a.out, bytes)])
}
