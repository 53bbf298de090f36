//! Per-agent reward shaping.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    /// Bonus for an empty intersection.
    pub kappa1: f64,
    /// Divisor of the waiting-time penalty when the queue grows.
    pub kappa2: f64,
    /// Gain on queue reduction.
    pub kappa3: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { kappa1: 25.0, kappa2: 5.0, kappa3: 5.0 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        if [self.kappa1, self.kappa2, self.kappa3].iter().all(|k| *k > 0.0 && k.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("reward parameters must be positive, got {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Empty-intersection bonus, waiting penalty on growth, gain on shrinkage.
    #[default]
    Piecewise,
    /// Plain queue reduction `Q(k-1) - Q(k)`.
    QueueDelta,
}

/// Reward for one intersection from its queue before and after a step and
/// the waiting time accumulated during it.
pub fn reward(queue: f64, prev_queue: f64, waiting: f64, params: &RewardParams) -> f64 {
    let delta = queue - prev_queue;
    if queue == 0.0 {
        params.kappa1
    } else if delta > 0.0 {
        -waiting / params.kappa2
    } else {
        -params.kappa3 * delta
    }
}

pub fn queue_delta_reward(queue: f64, prev_queue: f64) -> f64 {
    prev_queue - queue
}

pub fn global_reward(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches() {
        let p = RewardParams::default();
        assert_eq!(reward(0.0, 4.0, 9.0, &p), 25.0);
        assert_eq!(reward(5.0, 3.0, 10.0, &p), -2.0);
        assert_eq!(reward(2.0, 5.0, 10.0, &p), 15.0);
        assert_eq!(reward(4.0, 4.0, 10.0, &p), 0.0);
    }

    #[test]
    fn empty_branch_wins_over_decrease() {
        assert_eq!(reward(0.0, 3.0, 0.0, &RewardParams::default()), 25.0);
    }

    #[test]
    fn global_is_sum() {
        assert_eq!(global_reward(&[1.0, 2.0, 3.0]), 6.0);
        assert_eq!(global_reward(&[0.0; 4]), 0.0);
        assert_eq!(global_reward(&[3.0, 1.0, 2.0]), global_reward(&[1.0, 2.0, 3.0]));
    }

    #[test]
    fn nonpositive_kappa_rejected() {
        let p = RewardParams { kappa2: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
