use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use debias_core::embed::DsError;
use debias_core::evalset::{mean_recall, mitigation_row, recall_at_k, MitigationRow, ReportError};
use serde::Serialize;

use super::{json_bytes, Ctx};
use crate::cli::ReportArgs;
use crate::error::{Error, Result};
use crate::format;
use crate::io::Output;
use crate::providers::{AnyEmbedder, ProviderSpec};
use crate::remote::ProviderError;

/// One table row; fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub samples: usize,
    pub text_correct: f64,
    pub text_distractor: f64,
    pub text_gap: f64,
    pub visual_correct: f64,
    pub visual_distractor: f64,
    pub sim_cd: f64,
    pub sim_dd: Option<f64>,
}

impl From<MitigationRow> for ReportRow {
    fn from(r: MitigationRow) -> Self {
        Self {
            text_gap: r.text_gap(),
            name: r.name,
            samples: r.samples,
            text_correct: r.text_correct,
            text_distractor: r.text_distractor,
            visual_correct: r.visual_correct,
            visual_distractor: r.visual_distractor,
            sim_cd: r.sim_cd,
            sim_dd: r.sim_dd,
        }
    }
}

#[derive(Debug, Serialize)]
struct RecallJson {
    k: usize,
    recall: Option<f64>,
    counted: usize,
    skipped: usize,
}

#[derive(Debug, Serialize)]
struct ReportJson {
    ngram_max: usize,
    rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recall: Option<RecallJson>,
}

/// Percentages for the overlap columns, two decimals throughout.
pub fn markdown_table(rows: &[ReportRow]) -> String {
    let mut s = String::from(
        "| corpus | samples | C^t_c | C^t_d | C^v_c | C^v_d | Sim_cd | Sim_dd |\n\
         |---|---:|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let dd = r.sim_dd.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {} |",
            r.name,
            r.samples,
            100.0 * r.text_correct,
            100.0 * r.text_distractor,
            100.0 * r.visual_correct,
            100.0 * r.visual_distractor,
            r.sim_cd,
            dd
        );
    }
    s
}

fn parse_named(s: &str) -> Result<(String, PathBuf)> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(Error::Usage(format!("--corpora entries must be NAME=FILE, got {s:?}"))),
    }
}

fn report_error(path: &Path, e: ReportError<ProviderError>) -> Error {
    match e {
        ReportError::Similarity(DsError::Provider { source, .. }) => Error::Provider(source),
        other => Error::input(path, other),
    }
}

pub fn report(ctx: &mut Ctx, a: &ReportArgs) -> Result<Vec<Output>> {
    let markdown = match a.out.extension().and_then(|e| e.to_str()) {
        Some("md") => true,
        Some("json") => false,
        _ => return Err(Error::Usage("--out must end in .json or .md".into())),
    };
    let named = a.corpora.iter().map(|s| parse_named(s)).collect::<Result<Vec<_>>>()?;
    let spec = ProviderSpec::parse(&ctx.cfg.providers).map_err(Error::Usage)?;
    let embedder = AnyEmbedder::new(&spec, ctx.cfg.network());
    let n = ctx.cfg.ngram_max;

    let mut rows = Vec::new();
    for (name, path) in &named {
        let corpus = ctx.load_corpus(path)?;
        let row = mitigation_row(name, &corpus, &embedder, &ctx.stopwords, n).map_err(|e| report_error(path, e))?;
        println!(
            "{name}: C^t_c - C^t_d = {:.2} points over {} samples",
            100.0 * row.text_gap(),
            row.samples
        );
        rows.push(ReportRow::from(row));
    }

    let recall = match &a.attention {
        Some(p) => {
            let text = ctx.inputs.read_text(p)?;
            let records = format::parse_attention(&text).map_err(|e| Error::input(p, e))?;
            let hits = records
                .iter()
                .map(|(line, r)| {
                    recall_at_k(&r.attn, &r.entities, &r.gt, a.recall_k)
                        .map_err(|e| Error::input(p, format!("line {line}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let m = mean_recall(hits);
            Some(RecallJson {
                k: a.recall_k,
                recall: m.recall,
                counted: m.counted,
                skipped: m.skipped,
            })
        }
        None => None,
    };

    let bytes = if markdown {
        let mut s = markdown_table(&rows);
        if let Some(r) = &recall {
            let v = r
                .recall
                .map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
            let _ = writeln!(
                s,
                "\nRecall@{}: {} ({} samples, {} without ground truth)",
                r.k, v, r.counted, r.skipped
            );
        }
        s.into_bytes()
    } else {
        json_bytes(&ReportJson {
            ngram_max: n,
            rows,
            recall,
        })
    };
    Ok(vec![Output::file(&a.out, bytes)])
}
