//! Experiment configuration file (TOML).
//!
//! ```toml
//! output_dir = "out"
//! run_seeds = [1, 2, 3, 4, 5]
//!
//! [corpus]
//! size = 10
//! seed = 2024
//!
//! [scene]      # generator parameters
//! [camera]
//! [reward]     # r_t, step_penalty, k, m, c, parent_threshold_m, d_success_m
//! [train]
//! [eval]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::TrainConfig;
use crate::scene::GenParams;
use crate::sensor::Camera;
use crate::shaping::{RewardMode, RewardSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    #[serde(default = "default_run_seeds")]
    pub run_seeds: Vec<u64>,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub scene: GenParams,
    #[serde(default)]
    pub camera: Camera,
    #[serde(default)]
    pub reward: RewardConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_run_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub size: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { size: 10, seed: 2024 }
    }
}

/// Reward constants shared by all modes; the mode itself is chosen per command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub mode: Option<RewardMode>,
    pub r_t: f64,
    pub step_penalty: f64,
    pub k: f64,
    pub m: f64,
    pub c: f64,
    pub parent_threshold_m: f64,
    pub d_success_m: f64,
    pub failure_reward: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let s = RewardSpec::default();
        RewardConfig {
            mode: None,
            r_t: s.r_t,
            step_penalty: s.step_penalty,
            k: s.k,
            m: s.m,
            c: s.c,
            parent_threshold_m: s.parent_threshold,
            d_success_m: s.d_success,
            failure_reward: s.failure_reward,
        }
    }
}

impl RewardConfig {
    pub fn spec(&self, mode: RewardMode) -> RewardSpec {
        RewardSpec {
            mode,
            r_t: self.r_t,
            step_penalty: self.step_penalty,
            k: self.k,
            m: self.m,
            c: self.c,
            parent_threshold: self.parent_threshold_m,
            d_success: self.d_success_m,
            failure_reward: self.failure_reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes_per_scene: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes_per_scene: 50, seed: 99 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<ExperimentConfig, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `output_dir` is taken relative to it.
    pub fn load(path: &Path) -> Result<ExperimentConfig, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.scene.validate().map_err(|e| e.to_string())?;
        self.camera.validate().map_err(|e| e.to_string())?;
        self.reward.spec(RewardMode::Bin).validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        if self.corpus.size == 0 {
            return Err("corpus.size must be positive".into());
        }
        if self.run_seeds.is_empty() {
            return Err("run_seeds must not be empty".into());
        }
        let mut seeds = self.run_seeds.clone();
        seeds.sort();
        seeds.dedup();
        if seeds.len() != self.run_seeds.len() {
            return Err("run_seeds must be distinct".into());
        }
        if self.eval.episodes_per_scene == 0 {
            return Err("eval.episodes_per_scene must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("output_dir = \"out\"\n").unwrap();
        assert_eq!(cfg.run_seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(cfg.reward.spec(RewardMode::Depth).k, 0.1);
        assert_eq!(cfg.reward.spec(RewardMode::Depth).m, -0.15);
    }

    #[test]
    fn reward_keys() {
        let text = r#"
output_dir = "o"
[reward]
mode = "area"
r_t = 10.0
step_penalty = -0.05
k = 0.2
m = -0.1
c = 0.9
parent_threshold_m = 1.5
d_success_m = 0.75
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let s = cfg.reward.spec(RewardMode::Area);
        assert_eq!((s.r_t, s.step_penalty, s.k, s.m, s.c), (10.0, -0.05, 0.2, -0.1, 0.9));
        assert_eq!((s.parent_threshold, s.d_success), (1.5, 0.75));
        assert_eq!(cfg.reward.mode, Some(RewardMode::Area));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml("output_dir = \"o\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("output_dir = \"o\"\n[reward]\nk = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("output_dir = \"o\"\nrun_seeds = [1, 1]\n").is_err());
        assert!(ExperimentConfig::from_toml("output_dir = \"o\"\n[train]\ngamma = 1.0\n").is_err());
    }
}
