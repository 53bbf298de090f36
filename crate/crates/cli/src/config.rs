//! The declarative run file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsc_core::baselines::FixedTimeProgram;
use tsc_core::env::EnvConfig;
use tsc_core::forecast::{ForecastConfig, SyntheticConfig};
use tsc_core::marl::TrainerConfig;

use crate::failure::Failure;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastSection {
    /// CSV in the node-per-column layout; the synthetic generator is used when absent.
    pub data: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    pub model: ForecastConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Preset name or path to a topology JSON document.
    pub network: String,
    pub env: EnvConfig,
    pub trainer: TrainerConfig,
    pub fixed_time: FixedTimeProgram,
    pub eval_episodes: usize,
    pub forecast: ForecastSection,
    /// Copied into the trainer and forecaster seeds.
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads for parallel evaluation and forecasting; 0 uses every core.
    pub workers: usize,
    /// Pre-trained EHH checkpoint; defaults to `<out>/pretrain.json`.
    pub pretrain_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: "grid5x5".into(),
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            fixed_time: FixedTimeProgram::default(),
            eval_episodes: 5,
            forecast: ForecastSection::default(),
            seed: 0,
            out: PathBuf::from("runs"),
            workers: 0,
            pretrain_checkpoint: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::config(format!("invalid config: {e}")))
    }

    /// Pushes the top-level seed into the components and validates everything.
    pub fn resolve(mut self) -> Result<Self, Failure> {
        self.trainer.seed = self.seed;
        self.forecast.model.seed = self.seed;
        self.env.validate().map_err(|e| Failure::config(format!("env: {e}")))?;
        self.trainer.validate().map_err(|e| Failure::config(format!("trainer: {e}")))?;
        self.fixed_time.validate().map_err(|e| Failure::config(format!("fixed_time: {e}")))?;
        if self.eval_episodes == 0 {
            return Err(Failure::config("eval_episodes must be at least 1"));
        }
        Ok(self)
    }

    pub fn pretrain_path(&self) -> PathBuf {
        self.pretrain_checkpoint.clone().unwrap_or_else(|| self.out.join("pretrain.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_table() {
        let c = RunConfig::default();
        assert_eq!((c.env.reward.kappa1, c.env.reward.kappa2, c.env.reward.kappa3), (25.0, 5.0, 5.0));
        assert_eq!((c.env.episode_s, c.env.decision_s), (2500.0, 5.0));
        assert_eq!((c.trainer.clip_eps, c.trainer.batch_size, c.trainer.critic_lr, c.trainer.actor_lr), (0.2, 32, 0.01, 0.001));
        assert_eq!((c.env.sim.timing.yellow_s, c.env.sim.timing.min_green_s, c.env.sim.timing.max_green_s), (2.0, 5.0, 50.0));
        assert_eq!(c.fixed_time.green_s, 25.0);
    }

    #[test]
    fn unknown_field_is_named() {
        let err = RunConfig::parse(r#"{"trainer": {"gama": 0.5}}"#).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("gama"), "{}", err.message);
    }

    #[test]
    fn seed_propagates() {
        let c = RunConfig { seed: 7, ..Default::default() }.resolve().unwrap();
        assert_eq!((c.trainer.seed, c.forecast.model.seed), (7, 7));
    }
}
