//! Influence weights from an EHH model of next-step congestion.
//!
//! A linear map `W` compresses the concatenated observation of all agents to a
//! few EHH inputs. ANOVA importances of those inputs are mapped back through
//! `W`, grouped by owning agent and normalised into weights `w_j` that mix the
//! agents' embeddings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ehh::{fit_linear_ehh, LinearEhh, LinearEhhConfig};
use crate::env::{TrafficEnv, Transition};
use crate::trafficsim::NUM_STAGES;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceModule {
    /// `W` maps `n_agents * obs_width` inputs.
    pub model: LinearEhh,
    pub n_agents: usize,
    pub obs_width: usize,
}

impl InfluenceModule {
    pub fn ehh_width(&self) -> usize {
        self.model.width()
    }

    pub fn input_width(&self) -> usize {
        self.model.input_dim()
    }

    /// `x_tilde = W o` for a concatenated observation.
    pub fn transform(&self, concat: &[f64]) -> Vec<f64> {
        self.model.transform(concat)
    }

    /// Per-agent weights from the ANOVA importances over a batch of joint observations.
    pub fn weights(&self, batch: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        let xs: Vec<Vec<f64>> = batch.iter().map(|obs| obs.concat()).collect();
        let (_, inv) = self.model.importance(&xs)?;
        let scores: Vec<f64> = inv
            .sigma_in
            .chunks(self.obs_width)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        Ok(normalize_scores(&scores))
    }
}

/// `w_j = s_j / sum s`; uniform when every score is zero.
pub fn normalize_scores(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        log::warn!("all influence scores are zero; using uniform weights");
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    scores.iter().map(|s| s / total).collect()
}

/// `v_out[i] = [v_in[i], sum_j w_j v_in[j]]`.
pub fn aggregate(v_in: &[Vec<f64>], w: &[f64]) -> Vec<Vec<f64>> {
    let width = v_in.first().map_or(0, Vec::len);
    let mut mix = vec![0.0; width];
    for (v, wj) in v_in.iter().zip(w) {
        for (m, x) in mix.iter_mut().zip(v) {
            *m += wj * x;
        }
    }
    v_in.iter().map(|v| v.iter().chain(&mix).copied().collect()).collect()
}

/// Gradient of a loss with respect to `v_in`, given its gradient with respect to `v_out`.
pub fn aggregate_backward(dv_out: &[Vec<f64>], w: &[f64]) -> Vec<Vec<f64>> {
    let width = dv_out.first().map_or(0, |d| d.len() / 2);
    let mut dmix = vec![0.0; width];
    for d in dv_out {
        for (m, x) in dmix.iter_mut().zip(&d[width..]) {
            *m += x;
        }
    }
    dv_out
        .iter()
        .zip(w)
        .map(|(d, wj)| d[..width].iter().zip(&dmix).map(|(own, m)| own + wj * m).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    /// Random-policy episodes collected.
    pub episodes: usize,
    pub model: LinearEhhConfig,
    /// Share of samples held out for validation (taken from the end).
    pub holdout: f64,
    /// Hold each random action for this many decisions.
    pub action_hold: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { episodes: 4, model: LinearEhhConfig::default(), holdout: 0.2, action_hold: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub samples: usize,
    pub train_r2: f64,
    pub validation_r2: f64,
}

/// Collects random-policy rollouts and fits `W` and an EHH network that predict
/// every intersection's queue total one decision ahead.
pub fn pretrain_ehh(
    env: &mut TrafficEnv,
    config: &PretrainConfig,
    min_samples: usize,
    seed: u64,
) -> Result<(InfluenceModule, PretrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_agents = env.num_agents();
    let mut transitions: Vec<Transition> = Vec::new();
    for ep in 0..config.episodes {
        let hold = config.action_hold.max(1);
        let mut current = vec![0usize; n_agents];
        let episode = env.run_episode(seed.wrapping_add(ep as u64), |k, obs| {
            if k % hold == 0 {
                current = (0..obs.len()).map(|_| rand::Rng::random_range(&mut rng, 0..NUM_STAGES)).collect();
            }
            Ok(current.clone())
        })?;
        transitions.extend(episode.transitions);
    }
    fit_influence(&transitions, config, min_samples, &mut rng)
}

/// Fits the influence module on recorded transitions.
pub fn fit_influence(
    transitions: &[Transition],
    config: &PretrainConfig,
    min_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(InfluenceModule, PretrainReport)> {
    if transitions.len() < min_samples.max(2) {
        return Err(Error::data(format!(
            "EHH pre-training needs at least {} steps, got {}",
            min_samples.max(2),
            transitions.len()
        )));
    }
    let n_agents = transitions[0].obs.len();
    let obs_width = transitions[0].obs[0].len();
    let xs: Vec<Vec<f64>> = transitions.iter().map(|t| t.obs.concat()).collect();
    let ys: Vec<Vec<f64>> = transitions.iter().map(|t| t.queues.clone()).collect();
    let n = xs.len();
    let n_val = ((n as f64 * config.holdout).round() as usize).min(n - 1);
    let n_train = n - n_val;
    let (x_train, x_val) = xs.split_at(n_train);
    let (y_train, y_val) = ys.split_at(n_train);
    let (model, fit) = fit_linear_ehh(x_train, y_train, x_val, y_val, &config.model, rng)?;
    let report = PretrainReport { samples: n, train_r2: fit.train_r2, validation_r2: fit.validation_r2 };
    Ok((InfluenceModule { model, n_agents, obs_width }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent_aggregate_duplicates() {
        let v = vec![vec![0.5, -1.0, 2.0]];
        assert_eq!(aggregate(&v, &[1.0]), vec![vec![0.5, -1.0, 2.0, 0.5, -1.0, 2.0]]);
    }

    #[test]
    fn uniform_weights_give_mean() {
        let v = vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![2.0, 4.0]];
        let out = aggregate(&v, &normalize_scores(&[0.7, 0.7, 0.7]));
        for o in &out {
            assert!((o[2] - 2.0).abs() < 1e-12 && (o[3] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_normalisation() {
        // scores 1, 3, 1 over a total of 5
        let w = normalize_scores(&[1.0, 3.0, 1.0]);
        for (a, b) in w.iter().zip([0.2, 0.6, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let scaled = normalize_scores(&[7.0, 21.0, 7.0]);
        for (a, b) in w.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_scores_fall_back_to_uniform() {
        assert_eq!(normalize_scores(&[0.0, 0.0, 0.0, 0.0]), vec![0.25; 4]);
    }

    #[test]
    fn aggregate_backward_matches_finite_difference() {
        let v = vec![vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 0.25]];
        let w = [0.5, 0.3, 0.2];
        let d = vec![vec![0.1, 0.2, 0.3, 0.4], vec![-0.5, 0.6, 0.7, -0.8], vec![0.9, 1.0, -1.1, 1.2]];
        let loss = |v: &[Vec<f64>]| -> f64 {
            aggregate(v, &w).iter().zip(&d).map(|(o, g)| o.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()).sum()
        };
        let grad = aggregate_backward(&d, &w);
        for i in 0..3 {
            for k in 0..2 {
                let mut up = v.clone();
                up[i][k] += 1e-6;
                let mut down = v.clone();
                down[i][k] -= 1e-6;
                let fd = (loss(&up) - loss(&down)) / 2e-6;
                assert!((fd - grad[i][k]).abs() < 1e-8);
            }
        }
    }
}
