//! Episode loop: roll out decentralised actors, then run clipped policy and
//! value updates over the episode buffer.

use std::io::Write;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embed::{NodeEmbedder, ObsLayout};
use super::influence::{aggregate, aggregate_backward, pretrain_ehh, InfluenceModule, PretrainConfig, PretrainReport};
use super::ppo::{actor_step, critic_loss_grad, discounted_returns, softmax, PROB_FLOOR};
use crate::env::{EnvConfig, Episode, TrafficEnv, Transition};
use crate::pwlnet::{Gradients, Init, LayerSpec, Mlp, Optimizer, OptimizerConfig, Parameterized};
use crate::trafficsim::{metrics, Metrics, TrafficGraph, NUM_STAGES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// One joint critic on `[v_in, influence-weighted mix of all v_in]`.
    #[default]
    Influence,
    /// One critic per agent on its own `v_in`; no influence weights.
    Independent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// l1 penalty on critic weight matrices.
    pub l1_lambda: f64,
    pub clip_eps: f64,
    /// Minibatch size in decision steps.
    pub batch_size: usize,
    pub episodes: usize,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub seed: u64,
    /// Passes over the episode buffer per update.
    pub update_epochs: usize,
    pub embed_width: usize,
    pub hidden_width: usize,
    /// BReLU grid scale and centre for the first hidden layer.
    pub brelu_nu: f64,
    pub brelu_eta: f64,
    pub optimizer: OptimizerKind,
    /// Rewards are multiplied by this before computing returns.
    pub reward_scale: f64,
    /// Add the discounted critic value of the state after each segment to its returns.
    pub bootstrap: bool,
    /// Learning rate of the shared embedding, trained through the critic loss; 0 freezes it.
    pub embed_lr: f64,
    /// Standardise advantages before the actor step.
    pub normalize_advantages: bool,
    pub pretrain: PretrainConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            l1_lambda: 1e-4,
            clip_eps: 0.2,
            batch_size: 32,
            episodes: 100,
            critic_lr: 0.01,
            actor_lr: 0.001,
            seed: 0,
            update_epochs: 4,
            embed_width: 16,
            hidden_width: 64,
            brelu_nu: 1.0,
            brelu_eta: 0.0,
            optimizer: OptimizerKind::Adam,
            reward_scale: 0.01,
            bootstrap: true,
            embed_lr: 0.01,
            normalize_advantages: true,
            pretrain: PretrainConfig::default(),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            bad.push(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            bad.push(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        if self.batch_size < 1 {
            bad.push("batch_size must be >= 1".into());
        }
        if !(self.l1_lambda >= 0.0) {
            bad.push(format!("l1_lambda must be >= 0, got {}", self.l1_lambda));
        }
        for (name, lr) in [("critic_lr", self.critic_lr), ("actor_lr", self.actor_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                bad.push(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(self.embed_lr >= 0.0 && self.embed_lr.is_finite()) {
            bad.push(format!("embed_lr must be >= 0, got {}", self.embed_lr));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            bad.push(format!("reward_scale must be positive, got {}", self.reward_scale));
        }
        if self.embed_width == 0 || self.hidden_width == 0 {
            bad.push("network widths must be >= 1".into());
        }
        if !(self.brelu_nu > 0.0) {
            bad.push(format!("brelu_nu must be positive, got {}", self.brelu_nu));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    fn optimizer(&self, lr: f64) -> Optimizer {
        Optimizer::new(match self.optimizer {
            OptimizerKind::Adam => OptimizerConfig::adam(lr),
            OptimizerKind::Sgd => OptimizerConfig::sgd(lr),
        })
    }

    fn head(&self, input: usize, out: usize, rng: &mut ChaCha8Rng) -> Result<Mlp> {
        let specs = [
            LayerSpec::Brelu { width: self.hidden_width, nu: self.brelu_nu, eta: self.brelu_eta },
            LayerSpec::Relu(self.hidden_width),
            LayerSpec::Identity(out),
        ];
        Mlp::build(input, &specs, Init::He, Init::Zeros, rng)
    }
}

/// The decentralised part: shared embedding plus one actor per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub embed: NodeEmbedder,
    pub actors: Vec<Mlp>,
}

impl Policy {
    /// Action probabilities for every agent.
    pub fn probs(&self, obs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let v = self.embed.embed(obs)?;
        v.iter().zip(&self.actors).map(|(x, a)| Ok(softmax(&a.forward(x)?))).collect()
    }

    /// Greedy actions when `rng` is `None`, sampled otherwise.
    pub fn act(&self, obs: &[Vec<f64>], rng: Option<&mut ChaCha8Rng>) -> Result<Vec<usize>> {
        let probs = self.probs(obs)?;
        Ok(match rng {
            None => probs.iter().map(|p| argmax(p)).collect(),
            Some(rng) => probs.iter().map(|p| sample(p, rng.random::<f64>())).collect(),
        })
    }

    /// Rejects a policy built for a different network.
    pub fn check_network(&self, graph: &TrafficGraph) -> Result<()> {
        let layout = ObsLayout::from_graph(graph);
        if self.embed.layout != layout {
            return Err(Error::shape(format!(
                "layer `embed` was built for {} agents with observation width {}, the network has {} agents with width {}",
                self.embed.layout.agents(),
                self.embed.layout.obs_width(),
                layout.agents(),
                layout.obs_width()
            )));
        }
        if self.actors.len() != layout.agents() {
            return Err(Error::shape(format!("layer `actors` has {} heads for {} agents", self.actors.len(), layout.agents())));
        }
        Ok(())
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = k;
        }
    }
    best
}

fn sample(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return k;
        }
    }
    p.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub global_reward: f64,
    #[serde(rename = "AVE")]
    pub ave: f64,
    #[serde(rename = "STA")]
    pub sta: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub mode: CriticMode,
    pub trainer: TrainerConfig,
    pub env: EnvConfig,
    pub policy: Policy,
    pub critics: Vec<Mlp>,
    pub influence: Option<InfluenceModule>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub global_reward: f64,
    #[serde(rename = "AVE")]
    pub ave: f64,
    #[serde(rename = "STA")]
    pub sta: f64,
}

impl EpisodeSummary {
    pub fn from_episode(seed: u64, ep: &Episode) -> Result<Self> {
        let Metrics { ave, sta } = metrics(&ep.trace.totals)?;
        Ok(Self { seed, global_reward: ep.total_reward(), ave, sta })
    }
}

/// Seeds used for evaluation episodes, disjoint from training seeds.
pub fn evaluation_seed(i: u64) -> u64 {
    1_000_000 + i
}

/// Demand seed of training episode `episode`.
pub fn training_seed(base: u64, episode: usize) -> u64 {
    base.wrapping_mul(10_007).wrapping_add(episode as u64)
}

/// Runs one episode per seed through `run`, in parallel.
pub fn evaluate_with<F>(graph: &Arc<TrafficGraph>, env_config: &EnvConfig, seeds: &[u64], run: F) -> Result<Vec<(EpisodeSummary, Episode)>>
where
    F: Fn(&mut TrafficEnv, u64) -> Result<Episode> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut env = TrafficEnv::new(Arc::clone(graph), *env_config)?;
            let ep = run(&mut env, seed)?;
            if let Some(msg) = &ep.trace.aborted {
                return Err(Error::State(msg.clone()));
            }
            Ok((EpisodeSummary::from_episode(seed, &ep)?, ep))
        })
        .collect()
}

/// Greedy evaluation of a policy.
pub fn evaluate_policy(graph: &Arc<TrafficGraph>, env_config: &EnvConfig, policy: &Policy, seeds: &[u64]) -> Result<Vec<(EpisodeSummary, Episode)>> {
    evaluate_with(graph, env_config, seeds, |env, seed| env.run_episode(seed, |_, obs| policy.act(obs, None)))
}

pub struct Trainer {
    config: TrainerConfig,
    mode: CriticMode,
    env: TrafficEnv,
    policy: Policy,
    critics: Vec<Mlp>,
    influence: Option<InfluenceModule>,
    embed_opt: Optimizer,
    actor_opts: Vec<Optimizer>,
    critic_opts: Vec<Optimizer>,
    rng: ChaCha8Rng,
    anova_calls: u64,
    curve: Vec<CurveRow>,
    last_weights: Vec<f64>,
    episodes_done: usize,
}

/// Aggregates of one update pass.
struct PassStats {
    actor_loss: f64,
    critic_loss: f64,
}

impl Trainer {
    pub fn new(graph: Arc<TrafficGraph>, env_config: EnvConfig, config: TrainerConfig, mode: CriticMode) -> Result<Self> {
        config.validate()?;
        let env = TrafficEnv::new(Arc::clone(&graph), env_config)?;
        let n = env.num_agents();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let embed = NodeEmbedder::new(ObsLayout::from_graph(&graph), config.embed_width, &mut rng)?;
        let actors = (0..n).map(|_| config.head(config.embed_width, NUM_STAGES, &mut rng)).collect::<Result<Vec<_>>>()?;
        let critics = match mode {
            CriticMode::Influence => vec![config.head(2 * config.embed_width, 1, &mut rng)?],
            CriticMode::Independent => (0..n).map(|_| config.head(config.embed_width, 1, &mut rng)).collect::<Result<_>>()?,
        };
        Ok(Self {
            embed_opt: config.optimizer(config.embed_lr.max(f64::MIN_POSITIVE)),
            actor_opts: (0..n).map(|_| config.optimizer(config.actor_lr)).collect(),
            critic_opts: critics.iter().map(|_| config.optimizer(config.critic_lr)).collect(),
            config,
            mode,
            env,
            policy: Policy { embed, actors },
            critics,
            influence: None,
            rng,
            anova_calls: 0,
            curve: Vec::new(),
            last_weights: Vec::new(),
            episodes_done: 0,
        })
    }

    pub fn from_checkpoint(graph: Arc<TrafficGraph>, ck: Checkpoint) -> Result<Self> {
        ck.policy.check_network(&graph)?;
        let mut t = Self::new(graph, ck.env, ck.trainer, ck.mode)?;
        if ck.policy.actors.len() != t.policy.actors.len() || ck.critics.len() != t.critics.len() {
            return Err(Error::shape("checkpoint does not match the network's agent count"));
        }
        t.policy = ck.policy;
        t.critics = ck.critics;
        t.influence = ck.influence;
        Ok(t)
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.config
    }

    pub fn mode(&self) -> CriticMode {
        self.mode
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn critics(&self) -> &[Mlp] {
        &self.critics
    }

    pub fn influence(&self) -> Option<&InfluenceModule> {
        self.influence.as_ref()
    }

    pub fn set_influence(&mut self, module: InfluenceModule) -> Result<()> {
        let expected = self.env.num_agents() * self.env.obs_width();
        if module.input_width() != expected {
            return Err(Error::shape(format!("influence module expects {} inputs, network has {expected}", module.input_width())));
        }
        self.influence = Some(module);
        Ok(())
    }

    /// Number of ANOVA decompositions run so far.
    pub fn anova_calls(&self) -> u64 {
        self.anova_calls
    }

    /// Influence weights used in the most recent update.
    pub fn last_weights(&self) -> &[f64] {
        &self.last_weights
    }

    pub fn curve(&self) -> &[CurveRow] {
        &self.curve
    }

    pub fn env(&self) -> &TrafficEnv {
        &self.env
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            mode: self.mode,
            trainer: self.config,
            env: *self.env.config(),
            policy: self.policy.clone(),
            critics: self.critics.clone(),
            influence: self.influence.clone(),
        }
    }

    /// Fits the influence module from random-policy rollouts.
    pub fn pretrain(&mut self) -> Result<PretrainReport> {
        let seed = self.config.seed.wrapping_add(0x5eed);
        let (module, report) = pretrain_ehh(&mut self.env, &self.config.pretrain, self.config.batch_size, seed)?;
        self.influence = Some(module);
        Ok(report)
    }

    /// Runs the configured number of episodes; returns the learning curve so far.
    pub fn train(&mut self) -> Result<&[CurveRow]> {
        for _ in 0..self.config.episodes {
            self.train_episode()?;
        }
        Ok(&self.curve)
    }

    /// One rollout followed by one update pass.
    pub fn train_episode(&mut self) -> Result<CurveRow> {
        if self.mode == CriticMode::Influence && self.influence.is_none() {
            return Err(Error::State("influence critic needs a pre-trained EHH module".into()));
        }
        let seed = training_seed(self.config.seed, self.episodes_done);
        let policy = &self.policy;
        let rng = &mut self.rng;
        let episode = self.env.run_episode(seed, |_, obs| policy.act(obs, Some(rng)))?;
        if let Some(msg) = &episode.trace.aborted {
            return Err(Error::State(msg.clone()));
        }
        let stats = if episode.transitions.len() > self.config.batch_size {
            self.update(&episode.transitions)?
        } else {
            PassStats { actor_loss: 0.0, critic_loss: 0.0 }
        };
        let summary = EpisodeSummary::from_episode(seed, &episode)?;
        let row = CurveRow {
            episode: self.episodes_done,
            global_reward: summary.global_reward,
            ave: summary.ave,
            sta: summary.sta,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
        };
        log::info!(
            "episode {} reward {:.1} AVE {:.2} STA {:.2}",
            row.episode,
            row.global_reward,
            row.ave,
            row.sta
        );
        self.curve.push(row.clone());
        self.episodes_done += 1;
        Ok(row)
    }

    fn critic_input(&self, v_in: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self.mode {
            CriticMode::Influence => aggregate(v_in, &self.last_weights),
            CriticMode::Independent => v_in.to_vec(),
        }
    }

    fn critic_for(&self, agent: usize) -> usize {
        match self.mode {
            CriticMode::Influence => 0,
            CriticMode::Independent => agent,
        }
    }

    /// Influence weights for a batch, or empty in independent mode.
    pub fn influence_weights(&mut self, batch: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        match (self.mode, &self.influence) {
            (CriticMode::Independent, _) => Ok(Vec::new()),
            (CriticMode::Influence, None) => Err(Error::State("no influence module".into())),
            (CriticMode::Influence, Some(m)) => {
                self.anova_calls += 1;
                m.weights(batch)
            }
        }
    }

    /// Advantages `A[b][i]` and returns for a buffer under the current critic.
    /// Returns are truncated at the end of each `batch_size` segment and, with
    /// `bootstrap`, completed by the critic's value of the following state.
    pub fn advantages(&self, transitions: &[Transition], v_in: &[Vec<Vec<f64>>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let n = self.env.num_agents();
        let t = transitions.len();
        let mut returns = vec![vec![0.0; n]; t];
        for start in (0..t).step_by(self.config.batch_size) {
            let seg = &transitions[start..(start + self.config.batch_size).min(t)];
            let last = seg.last().expect("non-empty segment");
            let tail = if self.config.bootstrap && start + seg.len() < t {
                let v_next = self.policy.embed.embed(&last.next_obs)?;
                let inputs = self.critic_input(&v_next);
                (0..n).map(|i| Ok(self.critics[self.critic_for(i)].forward(&inputs[i])?[0])).collect::<Result<Vec<f64>>>()?
            } else {
                vec![0.0; n]
            };
            for i in 0..n {
                let r: Vec<f64> = seg.iter().map(|tr| tr.rewards[i] * self.config.reward_scale).collect();
                let len = r.len() as i32;
                for (b, g) in discounted_returns(&r, self.config.gamma).into_iter().enumerate() {
                    returns[start + b][i] = g + self.config.gamma.powi(len - b as i32) * tail[i];
                }
            }
        }
        let mut adv = vec![vec![0.0; n]; t];
        for b in 0..t {
            let inputs = self.critic_input(&v_in[b]);
            for i in 0..n {
                let v = self.critics[self.critic_for(i)].forward(&inputs[i])?[0];
                adv[b][i] = returns[b][i] - v;
            }
        }
        Ok((adv, returns))
    }

    fn update(&mut self, transitions: &[Transition]) -> Result<PassStats> {
        let n = self.env.num_agents();
        let t = transitions.len();
        let obs: Vec<Vec<Vec<f64>>> = transitions.iter().map(|tr| tr.obs.clone()).collect();
        self.last_weights = self.influence_weights(&obs)?;
        let v_in: Vec<Vec<Vec<f64>>> = obs.iter().map(|o| self.policy.embed.embed(o)).collect::<Result<_>>()?;
        let (adv, returns) = self.advantages(transitions, &v_in)?;

        let mut actor_adv = adv.clone();
        if self.config.normalize_advantages {
            let flat: Vec<f64> = adv.iter().flatten().copied().collect();
            let mean = flat.iter().sum::<f64>() / flat.len() as f64;
            let sd = (flat.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / flat.len() as f64).sqrt();
            for row in &mut actor_adv {
                for a in row.iter_mut() {
                    *a = (*a - mean) / (sd + 1e-8);
                }
            }
        }

        let old = self.policy.actors.clone();
        let old_probs: Vec<Vec<f64>> = (0..t)
            .map(|b| {
                (0..n)
                    .map(|i| Ok(softmax(&old[i].forward(&v_in[b][i])?)[transitions[b].actions[i]].max(PROB_FLOOR)))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;

        let mut segments: Vec<Vec<usize>> = (0..t).collect::<Vec<_>>().chunks(self.config.batch_size).map(<[usize]>::to_vec).collect();
        let (mut actor_sum, mut actor_count) = (0.0, 0usize);
        let (mut critic_sum, mut critic_count) = (0.0, 0usize);
        for _ in 0..self.config.update_epochs {
            segments.shuffle(&mut self.rng);
            for chunk in &segments {
                for i in 0..n {
                    let inputs: Vec<Vec<f64>> = chunk.iter().map(|&b| v_in[b][i].clone()).collect();
                    let actions: Vec<usize> = chunk.iter().map(|&b| transitions[b].actions[i]).collect();
                    let olds: Vec<f64> = chunk.iter().map(|&b| old_probs[b][i]).collect();
                    let advs: Vec<f64> = chunk.iter().map(|&b| actor_adv[b][i]).collect();
                    let obj = actor_step(
                        &mut self.policy.actors[i],
                        &mut self.actor_opts[i],
                        &inputs,
                        &actions,
                        &olds,
                        &advs,
                        self.config.clip_eps,
                    )?;
                    actor_sum -= obj;
                    actor_count += 1;
                }
                let loss = self.critic_minibatch(&obs, &returns, chunk)?;
                critic_sum += loss;
                critic_count += chunk.len() * n;
            }
        }
        Ok(PassStats {
            actor_loss: actor_sum / actor_count.max(1) as f64,
            critic_loss: critic_sum / critic_count.max(1) as f64,
        })
    }

    /// One value-regression step for the critic(s) and the embedding.
    fn critic_minibatch(&mut self, obs: &[Vec<Vec<f64>>], returns: &[Vec<f64>], chunk: &[usize]) -> Result<f64> {
        let n = self.env.num_agents();
        let mut passes = Vec::with_capacity(chunk.len());
        let mut inputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(chunk.len());
        for &b in chunk {
            let (v, pass) = self.policy.embed.embed_recorded(&obs[b])?;
            inputs.push(self.critic_input(&v));
            passes.push(pass);
        }
        let mut embed_grads = Gradients::zeros_like(&self.policy.embed);
        let mut total = 0.0;
        let mut dv_out: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n]; chunk.len()];
        let groups: Vec<Vec<usize>> = match self.mode {
            CriticMode::Influence => vec![(0..n).collect()],
            CriticMode::Independent => (0..n).map(|i| vec![i]).collect(),
        };
        for (c, agents) in groups.iter().enumerate() {
            let mut xs = Vec::with_capacity(chunk.len() * agents.len());
            let mut ys = Vec::with_capacity(xs.capacity());
            for (pos, &b) in chunk.iter().enumerate() {
                for &i in agents {
                    xs.push(inputs[pos][i].clone());
                    ys.push(returns[b][i]);
                }
            }
            let (loss, grads, input_grads) = critic_loss_grad(&self.critics[c], &xs, &ys, self.config.l1_lambda)?;
            total += loss;
            self.critics[c].accumulate(&grads)?;
            self.critic_opts[c].step(self.critics[c].params_mut())?;
            let mut it = input_grads.into_iter();
            for pos in 0..chunk.len() {
                for &i in agents {
                    dv_out[pos][i] = it.next().expect("one gradient per input");
                }
            }
        }
        for (pos, pass) in passes.iter().enumerate() {
            let dv_in = match self.mode {
                CriticMode::Influence => aggregate_backward(&dv_out[pos], &self.last_weights),
                CriticMode::Independent => dv_out[pos].clone(),
            };
            self.policy.embed.backward(pass, &dv_in, &mut embed_grads)?;
        }
        self.policy.embed.accumulate(&embed_grads)?;
        if self.config.embed_lr > 0.0 {
            self.embed_opt.step(self.policy.embed.params_mut())?;
        } else {
            self.policy.embed.zero_grad();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehh::LinearEhhConfig;
    use crate::trafficsim::load_network;

    fn small(mode: CriticMode, rate_scale: f64) -> Trainer {
        let g = Arc::new(load_network("grid1x2").unwrap());
        let env = EnvConfig { episode_s: 500.0, rate_scale, ..Default::default() };
        let cfg = TrainerConfig {
            episodes: 2,
            update_epochs: 1,
            hidden_width: 8,
            pretrain: PretrainConfig {
                episodes: 1,
                model: LinearEhhConfig { refine_rounds: 1, refine_steps: 2, ..Default::default() },
                ..Default::default()
            },
            ..Default::default()
        };
        Trainer::new(g, env, cfg, mode).unwrap()
    }

    #[test]
    fn zero_demand_reward_is_exact() {
        let mut t = small(CriticMode::Influence, 0.0);
        t.pretrain().unwrap();
        for row in t.train().unwrap() {
            assert_eq!(row.global_reward, 2.0 * 25.0 * 100.0);
        }
    }

    #[test]
    fn influence_mode_requires_pretraining() {
        let mut t = small(CriticMode::Influence, 1.0);
        assert!(matches!(t.train_episode(), Err(Error::State(_))));
    }

    #[test]
    fn independent_mode_never_runs_anova() {
        let mut t = small(CriticMode::Independent, 1.0);
        t.train().unwrap();
        assert_eq!(t.anova_calls(), 0);
        assert_eq!(t.critics().len(), 2);
    }

    #[test]
    fn identical_seeds_identical_curves() {
        let run = || {
            let mut t = small(CriticMode::Influence, 1.0);
            t.pretrain().unwrap();
            t.train().unwrap();
            (t.curve().to_vec(), t.checkpoint().to_json().unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut t = small(CriticMode::Influence, 1.0);
        t.pretrain().unwrap();
        t.train_episode().unwrap();
        let ck = t.checkpoint();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn sampling_covers_distribution() {
        assert_eq!(sample(&[0.25, 0.25, 0.5], 0.0), 0);
        assert_eq!(sample(&[0.25, 0.25, 0.5], 0.3), 1);
        assert_eq!(sample(&[0.25, 0.25, 0.5], 0.99), 2);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn curve_csv_header() {
        let rows = vec![CurveRow { episode: 0, global_reward: 1.5, ave: 2.0, sta: 0.5, actor_loss: 0.1, critic_loss: 3.0 }];
        let mut buf = Vec::new();
        write_curve_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "episode,global_reward,AVE,STA,actor_loss,critic_loss");
    }
}
