//! Subcommand implementations. Each returns its outputs in memory; the
//! caller commits them only when the whole command succeeded.

mod audit;
mod eval;
mod image;
mod losses;
mod report;
mod text;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use debias_core::corpus::{Corpus, Sample};
use debias_core::text::Stopwords;
use debias_core::variants::{collect_parts, SynthParts};
use serde::Serialize;

use crate::cli::Command;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::format;
use crate::io::{Inputs, Output};

pub use audit::um_stats_parallel;
pub use report::{markdown_table, ReportRow};

/// Per-run state shared by every command.
#[derive(Debug)]
pub struct Ctx {
    pub cfg: RunConfig,
    pub inputs: Inputs,
    pub stopwords: Stopwords,
}

impl Ctx {
    pub fn load_corpus(&mut self, path: &Path) -> Result<Corpus> {
        let text = self.inputs.read_text(path)?;
        format::parse_corpus(&text).map_err(|e| Error::input(path, e))
    }

    /// Synthesized samples from every file, grouped by parent.
    pub fn load_parts(&mut self, paths: &[PathBuf]) -> Result<BTreeMap<String, SynthParts>> {
        let mut synth: Vec<Sample> = Vec::new();
        for p in paths {
            let c = self.load_corpus(p)?;
            synth.extend(c.into_samples());
        }
        collect_parts(&synth).map_err(Error::data)
    }
}

pub(crate) fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("report serializes");
    out.push(b'\n');
    out
}

fn parse_tolerance(s: &str) -> Result<Option<usize>> {
    match s {
        "none" | "inf" => Ok(None),
        _ => s
            .parse()
            .map(Some)
            .map_err(|_| Error::Usage(format!("--ngram-tol must be a count or `none`, got {s:?}"))),
    }
}

/// Folds a command's flags into the configuration.
pub fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Audit(a) => {
            if let Some(n) = a.ngram_max {
                cfg.ngram_max = n;
            }
        }
        Command::SolveHeuristic(a) => {
            if let Some(n) = a.ngram_max {
                cfg.ngram_max = n;
            }
        }
        Command::SynthText(a) => {
            let m = &mut cfg.matching;
            if let Some(r) = a.rounds {
                m.rounds = r;
            }
            if let Some(l) = a.lambda {
                m.lambda = l;
            }
            if let Some(x) = a.alpha {
                m.alpha = x;
            }
            if a.multimodal {
                m.multimodal = true;
            }
            if let Some(p) = &a.providers {
                cfg.providers = p.clone();
            }
            if let Some(t) = a.max_tokens {
                cfg.refine.max_tokens = t;
            }
        }
        Command::SynthImage(a) => {
            let r = &mut cfg.regions;
            if let Some(m) = a.m {
                r.m = m;
            }
            if let Some(n) = a.n {
                r.n = n;
            }
            if let Some(t) = a.theta_exact {
                r.theta_exact = t;
            }
            if let Some(t) = a.theta_soft {
                r.theta_soft = t;
            }
            if let Some(b) = &a.backend {
                r.backend = b.clone();
            }
            if let Some(p) = &a.providers {
                cfg.providers = p.clone();
            }
        }
        Command::CheckLosses(a) => {
            if let Some(c) = a.cases {
                cfg.losses.cases = c;
            }
            if let Some(t) = a.tol {
                cfg.losses.tol = t;
            }
        }
        Command::EnumeratePairs(_) => {}
        Command::BuildEval(a) => {
            let e = &mut cfg.eval;
            if let Some(t) = a.qa_thresh {
                e.qa_thresh = t;
            }
            if let Some(t) = a.ia_thresh {
                e.ia_thresh = t;
            }
            if let Some(t) = a.ao_thresh {
                e.ao_thresh = t;
            }
            if let Some(t) = &a.ngram_tol {
                e.ngram_tol = parse_tolerance(t)?;
            }
            if a.visual {
                e.visual = true;
            }
        }
        Command::Report(a) => {
            if let Some(n) = a.ngram_max {
                cfg.ngram_max = n;
            }
            if let Some(p) = &a.providers {
                cfg.providers = p.clone();
            }
        }
    }
    Ok(())
}

pub fn run(ctx: &mut Ctx, cmd: &Command) -> Result<Vec<Output>> {
    match cmd {
        Command::Audit(a) => audit::audit(ctx, a),
        Command::SolveHeuristic(a) => audit::solve_heuristic(ctx, a),
        Command::SynthText(a) => text::synth_text(ctx, a),
        Command::SynthImage(a) => image::synth_image(ctx, a),
        Command::CheckLosses(a) => losses::check_losses(ctx, a),
        Command::EnumeratePairs(a) => eval::enumerate_pairs(ctx, a),
        Command::BuildEval(a) => eval::build_eval(ctx, a),
        Command::Report(a) => report::report(ctx, a),
    }
}
