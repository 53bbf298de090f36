//! Reference controllers: fixed-time cycling, independent critics and the
//! queue-difference reward.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Episode, RewardKind, TrafficEnv};
use crate::marl::{evaluate_with, CriticMode, EpisodeSummary, Trainer, TrainerConfig};
use crate::trafficsim::{TrafficGraph, NUM_STAGES};
use crate::{Error, Result};

/// Cycles through the four stages with equal green splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedTimeProgram {
    pub green_s: f64,
    pub yellow_s: f64,
}

impl Default for FixedTimeProgram {
    fn default() -> Self {
        Self { green_s: 25.0, yellow_s: 2.0 }
    }
}

impl FixedTimeProgram {
    pub fn validate(&self) -> Result<()> {
        if !(self.green_s > 0.0 && self.yellow_s >= 0.0) {
            return Err(Error::config(format!("fixed-time green {} s / yellow {} s", self.green_s, self.yellow_s)));
        }
        Ok(())
    }

    pub fn cycle_s(&self) -> f64 {
        NUM_STAGES as f64 * (self.green_s + self.yellow_s)
    }

    /// Stage requested at time `t`. The request switches `yellow_s` before the
    /// slot ends so that the yellow interval falls inside the slot.
    pub fn request(&self, t: f64) -> usize {
        let slot = self.green_s + self.yellow_s;
        let pos = t.rem_euclid(self.cycle_s());
        ((pos + self.yellow_s) / slot).floor() as usize % NUM_STAGES
    }
}

pub fn fixed_time_episode(env: &mut TrafficEnv, seed: u64, program: &FixedTimeProgram) -> Result<Episode> {
    program.validate()?;
    let n = env.num_agents();
    env.run_episode_scheduled(seed, |t| vec![program.request(t); n])
}

pub fn evaluate_fixed_time(
    graph: &Arc<TrafficGraph>,
    env_config: &EnvConfig,
    program: &FixedTimeProgram,
    seeds: &[u64],
) -> Result<Vec<(EpisodeSummary, Episode)>> {
    evaluate_with(graph, env_config, seeds, |env, seed| fixed_time_episode(env, seed, program))
}

/// Same actors and embedding, but each agent's critic sees only its own embedding.
pub fn ippo_trainer(graph: Arc<TrafficGraph>, env_config: EnvConfig, config: TrainerConfig) -> Result<Trainer> {
    Trainer::new(graph, env_config, config, CriticMode::Independent)
}

/// The environment with `r = Q_prev - Q` in place of the piecewise reward.
pub fn queue_delta_config(env_config: EnvConfig) -> EnvConfig {
    EnvConfig { reward_kind: RewardKind::QueueDelta, ..env_config }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trafficsim::{load_network, Signal};

    #[test]
    fn request_schedule() {
        let p = FixedTimeProgram::default();
        assert_eq!(p.cycle_s(), 108.0);
        assert_eq!(p.request(0.0), 0);
        assert_eq!(p.request(24.0), 0);
        assert_eq!(p.request(25.0), 1);
        assert_eq!(p.request(26.0), 1);
        assert_eq!(p.request(52.0), 2);
        assert_eq!(p.request(106.0), 0);
        assert_eq!(p.request(108.0), 0);
    }

    #[test]
    fn signal_follows_108_second_cycle() {
        let g = Arc::new(load_network("grid2x2").unwrap());
        let mut env = TrafficEnv::new(g, EnvConfig { episode_s: 300.0, ..Default::default() }).unwrap();
        fixed_time_episode(&mut env, 0, &FixedTimeProgram::default()).unwrap();
        let h = env.simulator().history(0);
        let greens = |s: usize| h.iter().filter(|x| **x == Signal::Green(s)).count();
        assert_eq!(h.len(), 300);
        assert_eq!(h[0], Signal::Green(0));
        assert_eq!(h[25], Signal::Yellow { from: 0, to: 1 });
        assert_eq!(h[27], Signal::Green(1));
        assert_eq!(h[106], Signal::Yellow { from: 3, to: 0 });
        assert_eq!(h[108], Signal::Green(0));
        assert_eq!(greens(0), 75);
        assert_eq!(greens(1), 75);
        // last slot is cut off at t = 300
        assert_eq!(greens(3), 53);
    }

    #[test]
    fn queue_delta_swaps_reward_only() {
        let base = EnvConfig::default();
        let q = queue_delta_config(base);
        assert_eq!(q.reward_kind, RewardKind::QueueDelta);
        assert_eq!(EnvConfig { reward_kind: RewardKind::Piecewise, ..q }, base);
    }
}
