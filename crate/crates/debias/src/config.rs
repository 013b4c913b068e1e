//! Run configuration: a JSON file whose values command-line flags override.

use std::path::Path;
use std::time::Duration;

use debias_core::evalset::FairFilterCriteria;
use debias_core::matching::{MatchParams, RefineConfig, Thresholds};
use debias_core::region::{SelectParams, TriPassParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::providers::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub ngram_max: usize,
    /// `builtin` or a server base URL.
    pub providers: String,
    pub timeout_secs: f64,
    pub retries: u32,
    pub matching: MatchingConfig,
    pub refine: RefineSettings,
    pub regions: RegionConfig,
    pub losses: LossConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            jobs: None,
            ngram_max: 3,
            providers: "builtin".into(),
            timeout_secs: 30.0,
            retries: 2,
            matching: MatchingConfig::default(),
            refine: RefineSettings::default(),
            regions: RegionConfig::default(),
            losses: LossConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub lambda: f64,
    pub alpha: f64,
    pub clamp_eps: f64,
    pub multimodal: bool,
    pub rounds: usize,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        let p = MatchParams::default();
        Self {
            lambda: p.lambda,
            alpha: p.alpha,
            clamp_eps: p.clamp_eps,
            multimodal: p.multimodal,
            rounds: p.rounds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSettings {
    pub overlap: usize,
    pub irrelevant: usize,
    pub sim_hi: f64,
    pub diversity: f64,
    pub max_tokens: u32,
}

impl Default for RefineSettings {
    fn default() -> Self {
        let t = Thresholds::default();
        Self {
            overlap: t.overlap,
            irrelevant: t.irrelevant,
            sim_hi: t.sim_hi,
            diversity: t.diversity,
            max_tokens: RefineConfig::default().max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionConfig {
    pub m: u32,
    pub n: u32,
    pub theta_exact: usize,
    pub theta_soft: f64,
    pub backend: String,
}

impl Default for RegionConfig {
    fn default() -> Self {
        let t = TriPassParams::default();
        let s = SelectParams::default();
        Self {
            m: t.m,
            n: t.n,
            theta_exact: s.theta_exact,
            theta_soft: s.theta_soft,
            backend: "builtin:neighbor".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub cases: usize,
    pub tol: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            delta1: 1.0,
            delta2: 1.0,
            cases: 100,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub qa_thresh: f64,
    pub ia_thresh: f64,
    pub ao_thresh: f64,
    /// `null` disables the n-gram balance check.
    pub ngram_tol: Option<usize>,
    pub visual: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let c = FairFilterCriteria::default();
        Self {
            qa_thresh: c.thresholds[0],
            ia_thresh: c.thresholds[1],
            ao_thresh: c.thresholds[2],
            ngram_tol: c.ngram_tolerance,
            visual: c.visual,
        }
    }
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(format!("invalid configuration: {what}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            Error::input(path, format!("{field}: {}", e.into_inner()))
        })
    }

    pub fn validate(&self) -> Result<()> {
        check(self.ngram_max >= 1, "ngram_max must be at least 1")?;
        check(self.jobs != Some(0), "jobs must be at least 1")?;
        check(
            self.timeout_secs > 0.0 && self.timeout_secs.is_finite(),
            "timeout_secs must be positive",
        )?;
        self.match_params()
            .validate()
            .map_err(|e| Error::Usage(format!("invalid configuration: {e}")))?;
        let r = &self.refine;
        check((0.0..=1.0).contains(&r.sim_hi), "refine.sim_hi must lie in [0, 1]")?;
        check(
            (0.0..=1.0).contains(&r.diversity),
            "refine.diversity must lie in [0, 1]",
        )?;
        check(r.max_tokens >= 1, "refine.max_tokens must be at least 1")?;
        check(
            self.regions.m >= 1 && self.regions.n >= 1,
            "regions.m and regions.n must be at least 1",
        )?;
        check(
            (-1.0..=1.0).contains(&self.regions.theta_soft),
            "regions.theta_soft must lie in [-1, 1]",
        )?;
        let l = &self.losses;
        check(
            l.delta1 >= 0.0 && l.delta2 >= 0.0 && l.delta1.is_finite() && l.delta2.is_finite(),
            "losses.delta1 and losses.delta2 must be non-negative",
        )?;
        check(l.tol > 0.0, "losses.tol must be positive")?;
        self.fair_criteria()
            .validate()
            .map_err(|e| Error::Usage(format!("invalid configuration: {e}")))
    }

    pub fn match_params(&self) -> MatchParams {
        let m = &self.matching;
        MatchParams {
            lambda: m.lambda,
            alpha: m.alpha,
            clamp_eps: m.clamp_eps,
            multimodal: m.multimodal,
            rounds: m.rounds,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            overlap: self.refine.overlap,
            irrelevant: self.refine.irrelevant,
            sim_hi: self.refine.sim_hi,
            diversity: self.refine.diversity,
        }
    }

    pub fn tri_pass(&self) -> TriPassParams {
        TriPassParams {
            m: self.regions.m,
            n: self.regions.n,
        }
    }

    pub fn select_params(&self) -> SelectParams {
        SelectParams {
            theta_exact: self.regions.theta_exact,
            theta_soft: self.regions.theta_soft,
        }
    }

    pub fn fair_criteria(&self) -> FairFilterCriteria {
        let e = &self.eval;
        FairFilterCriteria {
            thresholds: [e.qa_thresh, e.ia_thresh, e.ao_thresh],
            ngram_tolerance: e.ngram_tol,
            visual: e.visual,
            n_max: self.ngram_max,
        }
    }

    pub fn network(&self) -> Network {
        Network {
            timeout: Duration::from_secs_f64(self.timeout_secs),
            retries: self.retries,
        }
    }

    /// The seed, required by commands with a stochastic step.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Usage("this command needs a seed: pass --seed or set \"seed\" in the config".into()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
