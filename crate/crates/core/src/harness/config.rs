use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::EntropyScale;
use crate::error::{Error, Result};
use crate::problems::ProblemId;
use crate::search::Method;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_ENV: &str = "FEASIMAP_OUT";

/// A benchmark campaign: every method on every problem, `reps` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub problems: Vec<ProblemId>,
    pub methods: Vec<Method>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: usize,
    #[serde(default = "default_budget_multiplier")]
    pub budget_multiplier: usize,
    #[serde(default = "default_acq_eval_multiplier")]
    pub acq_eval_multiplier: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub pbe_entropy_floor: Option<f64>,
    #[serde(default)]
    pub pbe_entropy_scale: EntropyScale,
}

fn default_reps() -> usize {
    21
}

fn default_validation_samples() -> usize {
    10_000
}

fn default_budget_multiplier() -> usize {
    11
}

fn default_acq_eval_multiplier() -> usize {
    5000
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

impl CampaignConfig {
    pub fn new(problems: Vec<ProblemId>, methods: Vec<Method>) -> Self {
        CampaignConfig {
            problems,
            methods,
            reps: default_reps(),
            validation_samples: default_validation_samples(),
            budget_multiplier: default_budget_multiplier(),
            acq_eval_multiplier: default_acq_eval_multiplier(),
            master_seed: 0,
            output_dir: default_output_dir(),
            workers: None,
            pbe_entropy_floor: None,
            pbe_entropy_scale: EntropyScale::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CampaignConfig =
            toml::from_str(text).map_err(|e| Error::input(format!("campaign config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str::<CampaignConfig>(&text)
            .map_err(|e| Error::format(path, e))
            .and_then(|cfg| cfg.validate().map(|_| cfg))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("campaign config serializes")
    }

    /// Replaces `output_dir` with `$FEASIMAP_OUT` when it is set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems.is_empty() || self.methods.is_empty() {
            return Err(Error::input("a campaign needs at least one problem and one method"));
        }
        if self.reps == 0 {
            return Err(Error::input("reps must be at least 1"));
        }
        if self.budget_multiplier == 0 || self.acq_eval_multiplier == 0 {
            return Err(Error::input("multipliers must be at least 1"));
        }
        if self.validation_samples == 0 {
            return Err(Error::input("validation_samples must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::input("workers must be at least 1"));
        }
        let dup = |v: &[String]| (1..v.len()).any(|i| v[..i].contains(&v[i]));
        if dup(&self.problems.iter().map(|p| p.to_string()).collect::<Vec<_>>())
            || dup(&self.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>())
        {
            return Err(Error::input("problems and methods must not repeat"));
        }
        Ok(())
    }
}
