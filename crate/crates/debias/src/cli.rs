//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use debias_core::text::Stopwords;

use crate::commands::{self, Ctx};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{commit, Inputs};

#[derive(Debug, Parser)]
#[command(
    name = "debias",
    version,
    about = "Bias audit and debiased data synthesis for multiple-choice VQA corpora"
)]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Stopword list replacing the shipped English list, one word per line.
    #[arg(long, global = true, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// Per-request timeout for remote providers, in seconds.
    #[arg(long, global = true, value_name = "SECS")]
    pub timeout: Option<f64>,
    /// Retries after a transport error or 5xx answer.
    #[arg(long, global = true)]
    pub retries: Option<u32>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unbalanced-matching statistics of a corpus.
    Audit(AuditArgs),
    /// Answers every sample by n-gram overlap alone.
    SolveHeuristic(HeuristicArgs),
    /// Synthesizes A+ and A- variants by adversarial matching and refinement.
    SynthText(SynthTextArgs),
    /// Synthesizes I+ and I- images by coarse-to-fine region removal.
    SynthImage(SynthImageArgs),
    /// Checks loss gradients against finite differences.
    CheckLosses(CheckLossesArgs),
    /// Expands augmented samples into training pairs and contrastive triples.
    EnumeratePairs(EnumerateArgs),
    /// Builds the fair subset and its adversarial expansion.
    BuildEval(BuildEvalArgs),
    /// Bias-mitigation table over named corpora.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Audit(_) => "audit",
            Command::SolveHeuristic(_) => "solve-heuristic",
            Command::SynthText(_) => "synth-text",
            Command::SynthImage(_) => "synth-image",
            Command::CheckLosses(_) => "check-losses",
            Command::EnumeratePairs(_) => "enumerate-pairs",
            Command::BuildEval(_) => "build-eval",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Premise {
    Text,
    Visual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Text,
    Visual,
    Combined,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub premise: Premise,
    #[arg(long)]
    pub ngram_max: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeuristicArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub policy: Policy,
    #[arg(long)]
    pub ngram_max: Option<usize>,
    /// Per-sample predictions and accuracy as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthTextArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Add the region-relevance term to the matching weights.
    #[arg(long)]
    pub multimodal: bool,
    /// `builtin` or the base URL serving /score and /generate.
    #[arg(long)]
    pub providers: Option<String>,
    /// Exemplar pool for the refinement prompt (JSON lines).
    #[arg(long)]
    pub exemplars: Option<PathBuf>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthImageArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Directory the corpus image paths are relative to.
    #[arg(long)]
    pub images: PathBuf,
    /// builtin:neighbor|identity|constant[:V] or the base URL serving /inpaint.
    #[arg(long)]
    pub backend: Option<String>,
    /// `builtin` or the base URL serving /embed, for region selection.
    #[arg(long)]
    pub providers: Option<String>,
    /// Second-pass block count.
    #[arg(long = "M")]
    pub m: Option<u32>,
    /// Third-pass block count.
    #[arg(long = "N")]
    pub n: Option<u32>,
    #[arg(long)]
    pub theta_exact: Option<usize>,
    #[arg(long)]
    pub theta_soft: Option<f64>,
    /// Output directory for the images and synth.jsonl.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckLossesArgs {
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Synthesized-variant files (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    pub synth: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BuildEvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub confidences: PathBuf,
    /// Synthesized-variant files (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    pub synth: Vec<PathBuf>,
    #[arg(long)]
    pub qa_thresh: Option<f64>,
    #[arg(long)]
    pub ia_thresh: Option<f64>,
    #[arg(long)]
    pub ao_thresh: Option<f64>,
    /// Max matched n-gram gap, or `none` to disable the check.
    #[arg(long)]
    pub ngram_tol: Option<String>,
    /// Also require n-gram balance against the visual premise.
    #[arg(long)]
    pub visual: bool,
    #[arg(long)]
    pub out_fair: PathBuf,
    #[arg(long)]
    pub out_adv: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Named corpora as NAME=FILE.
    #[arg(long, required = true, num_args = 1..)]
    pub corpora: Vec<String>,
    /// `builtin` or the base URL serving /embed.
    #[arg(long)]
    pub providers: Option<String>,
    #[arg(long)]
    pub ngram_max: Option<usize>,
    /// Attention file for recall@k.
    #[arg(long)]
    pub attention: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub recall_k: usize,
    /// `.json` or `.md`.
    #[arg(long)]
    pub out: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(t) = cli.timeout {
        cfg.timeout_secs = t;
    }
    if let Some(r) = cli.retries {
        cfg.retries = r;
    }
    commands::apply_overrides(&mut cfg, &cli.command)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = effective_config(&cli)?;
    let mut inputs = Inputs::default();
    let stopwords = match &cli.stopwords {
        Some(p) => Stopwords::parse(&inputs.read_text(p)?),
        None => Stopwords::english(),
    };
    let name = cli.command.name();
    let mut ctx = Ctx { cfg, inputs, stopwords };
    let run = |ctx: &mut Ctx| commands::run(ctx, &cli.command);
    let jobs = ctx.cfg.jobs;
    let outputs = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))?
            .install(|| run(&mut ctx))?,
        None => run(&mut ctx)?,
    };
    commit(outputs, name, ctx.cfg.to_json(), &ctx.inputs)
}

/// Runs the tool on `args` (program name first) and returns the exit code:
/// 0 on success, 1 on a usage or data error, 2 on a provider failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
