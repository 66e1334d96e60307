//! Run configuration: every tunable constant in one structured document,
//! with TOML round-trip and a content hash embedded in checkpoints and
//! manifests.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{EpisodeConfig, RewardVariant};
use crate::error::{Error, Result};
use crate::guide::GuideConfig;
use crate::policy::PolicyConfig;
use crate::problems::{Category, TaskSpec};
use crate::trainer::{OptimConfig, PpoConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSettings {
    pub dim: usize,
    pub x_lb: f64,
    pub x_ub: f64,
    pub offset_low: f64,
    pub offset_high: f64,
    pub fe_budget: u64,
}

impl Default for ProblemSettings {
    fn default() -> Self {
        ProblemSettings {
            dim: 10,
            x_lb: -100.0,
            x_ub: 100.0,
            offset_low: -80.0,
            offset_high: 80.0,
            fe_budget: 50_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSettings {
    pub pop_size: usize,
    pub reward_variant: RewardVariant,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        EpisodeSettings {
            pop_size: 100,
            reward_variant: RewardVariant::Descent,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub n_problems: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { n_problems: 32 }
    }
}

/// Full run configuration. Defaults reproduce the declared reference
/// settings (10-dim problems on [-100, 100] with U[-80, 80] offsets, 50k
/// evaluations, population 100, 320 problems per epoch, 100 epochs per
/// task, alpha = beta = 1, learning rate 0.001, 32 evaluation problems).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub problem: ProblemSettings,
    pub episode: EpisodeSettings,
    pub eval: EvalSettings,
    pub guide: GuideConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub optim: OptimConfig,
    pub train: TrainConfig,
}

impl Config {
    /// Optimization iterations per episode: the budget covers the initial
    /// population plus `horizon` full generations.
    pub fn horizon(&self) -> usize {
        (self.problem.fe_budget / self.episode.pop_size as u64).saturating_sub(1) as usize
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.problem.x_lb, self.problem.x_ub)
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            pop_size: self.episode.pop_size,
            horizon: self.horizon(),
            reward_variant: self.episode.reward_variant,
            guide: self.guide.clone(),
        }
    }

    pub fn task(&self, category: Category) -> TaskSpec {
        TaskSpec {
            categories: vec![category],
            dim: self.problem.dim,
            bounds: self.bounds(),
            offset_low: self.problem.offset_low,
            offset_high: self.problem.offset_high,
            fe_budget: self.problem.fe_budget,
        }
    }

    pub fn all_task(&self) -> TaskSpec {
        TaskSpec {
            categories: Category::ALL.to_vec(),
            dim: self.problem.dim,
            bounds: self.bounds(),
            offset_low: self.problem.offset_low,
            offset_high: self.problem.offset_high,
            fe_budget: self.problem.fe_budget,
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    /// Content hash over the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let text = self.to_toml_string().expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for b in digest.iter().take(8) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode.pop_size < 2 {
            return Err(Error::config("pop_size must be >= 2"));
        }
        if self.problem.fe_budget < self.episode.pop_size as u64 {
            return Err(Error::config("fe_budget below one population evaluation"));
        }
        if self.policy.hidden == 0 {
            return Err(Error::config("policy hidden width must be positive"));
        }
        if self.train.alpha < 0.0 || self.train.beta < 0.0 {
            return Err(Error::config("alpha and beta must be >= 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::OptimizerKind;

    #[test]
    fn defaults_match_reference_settings() {
        let c = Config::default();
        assert_eq!(c.train.alpha, 1.0);
        assert_eq!(c.train.beta, 1.0);
        assert_eq!(c.optim.learning_rate, 0.001);
        assert_eq!(c.episode.pop_size, 100);
        assert_eq!(c.problem.fe_budget, 50_000);
        assert_eq!(c.train.episodes_per_epoch, 320);
        assert_eq!(c.train.epochs_per_task, 100);
        assert_eq!(c.eval.n_problems, 32);
        assert_eq!(c.problem.dim, 10);
        assert_eq!(c.bounds(), (-100.0, 100.0));
        assert_eq!(c.problem.offset_low, -80.0);
        assert_eq!(c.problem.offset_high, 80.0);
        assert_eq!(c.horizon(), 499);
        assert_eq!(c.optim.kind, OptimizerKind::Adam);
    }

    #[test]
    fn toml_round_trip_and_stable_hash() {
        let c = Config::default();
        let text = c.to_toml_string().unwrap();
        let back = Config::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());

        let mut other = c.clone();
        other.train.alpha = 0.5;
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = Config::from_toml_str(
            "[problem]\ndim = 2\nfe_budget = 310\n\n[episode]\npop_size = 10\n",
        )
        .unwrap();
        assert_eq!(c.problem.dim, 2);
        assert_eq!(c.episode.pop_size, 10);
        assert_eq!(c.horizon(), 30);
        assert_eq!(c.train.alpha, 1.0);
        c.validate().unwrap();
    }

    #[test]
    fn validate_rejects_nonsense() {
        let mut c = Config::default();
        c.episode.pop_size = 1;
        assert!(c.validate().is_err());
        let mut c = Config::default();
        c.train.beta = -0.1;
        assert!(c.validate().is_err());
    }
}
