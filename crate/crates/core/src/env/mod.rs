//! Multi-agent signal-control environment over the traffic simulator.
//!
//! Each intersection is an agent. Every decision step the agents request a
//! green stage; the environment enforces min/max green and yellow, runs the
//! simulator for `decision_s` seconds and returns local observations and
//! per-agent rewards.

mod reward;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use reward::{global_reward, queue_delta_reward, reward, RewardKind, RewardParams};

use crate::trafficsim::{SimConfig, Simulator, Trace, TrafficGraph, NUM_STAGES};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub episode_s: f64,
    /// Seconds between decisions.
    pub decision_s: f64,
    pub reward: RewardParams,
    pub reward_kind: RewardKind,
    /// Multiplier on every source's arrival rate.
    pub rate_scale: f64,
    pub sim: SimConfig,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_s: 2500.0,
            decision_s: 5.0,
            reward: RewardParams::default(),
            reward_kind: RewardKind::Piecewise,
            rate_scale: 1.0,
            sim: SimConfig::default(),
        }
    }
}

impl EnvConfig {
    pub fn decision_steps(&self) -> usize {
        (self.episode_s / self.decision_s).round() as usize
    }

    fn ticks_per_decision(&self) -> usize {
        (self.decision_s / self.sim.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        let ratio = self.decision_s / self.sim.dt;
        if !(self.decision_s > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(Error::config(format!(
                "decision interval {} s must be a positive multiple of the tick {} s",
                self.decision_s, self.sim.dt
            )));
        }
        if !(self.episode_s >= self.decision_s) {
            return Err(Error::config(format!("episode of {} s is shorter than one decision", self.episode_s)));
        }
        if !(self.rate_scale >= 0.0 && self.rate_scale.is_finite()) {
            return Err(Error::config(format!("rate_scale must be >= 0, got {}", self.rate_scale)));
        }
        Ok(())
    }
}

/// One decision step for all agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub k: usize,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub global_reward: f64,
    pub next_obs: Vec<Vec<f64>>,
    /// `Q_i` after the step.
    pub queues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub global_reward: f64,
    pub queues: Vec<f64>,
    /// Waiting seconds accumulated during the step, per intersection.
    pub waiting: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Episode {
    pub trace: Trace,
    pub transitions: Vec<Transition>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.global_reward).sum()
    }
}

pub struct TrafficEnv {
    sim: Simulator,
    config: EnvConfig,
    rates: Vec<f64>,
    requests: Vec<usize>,
    step: usize,
}

impl TrafficEnv {
    pub fn new(graph: Arc<TrafficGraph>, config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let rates = graph.source_rates().iter().map(|r| r * config.rate_scale).collect();
        let n = graph.num_intersections();
        let sim = Simulator::new(graph, config.sim)?;
        Ok(Self { sim, config, rates, requests: vec![0; n], step: 0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn graph(&self) -> &Arc<TrafficGraph> {
        self.sim.graph()
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn num_agents(&self) -> usize {
        self.graph().num_intersections()
    }

    /// Observation width: stage one-hot, then queue and density per padded incoming slot.
    pub fn obs_width(&self) -> usize {
        obs_width(self.graph())
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Reseeds demand and clears the network.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sim.reset(&self.rates, seed, self.config.episode_s)?;
        self.requests.iter_mut().for_each(|r| *r = 0);
        self.step = 0;
        Ok(self.observe())
    }

    pub fn observe(&self) -> Vec<Vec<f64>> {
        observe(&self.sim)
    }

    /// Stores the requested stage per agent; timing constraints are applied while stepping.
    pub fn apply_actions(&mut self, actions: &[usize]) -> Result<()> {
        if actions.len() != self.num_agents() {
            return Err(Error::Action(format!("{} actions for {} agents", actions.len(), self.num_agents())));
        }
        if let Some((i, a)) = actions.iter().enumerate().find(|(_, a)| **a >= NUM_STAGES) {
            return Err(Error::Action(format!("agent {i} chose stage {a}, expected 0..{NUM_STAGES}")));
        }
        self.requests.copy_from_slice(actions);
        Ok(())
    }

    /// Applies `actions`, simulates one decision interval and scores it.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        self.check_running()?;
        self.apply_actions(actions)?;
        self.advance(|_| None)
    }

    /// Simulates one decision interval with `schedule(time_s)` choosing the
    /// requests before every tick.
    pub fn step_scheduled<F>(&mut self, mut schedule: F) -> Result<StepOutcome>
    where
        F: FnMut(f64) -> Vec<usize>,
    {
        self.check_running()?;
        self.advance(|t| Some(schedule(t)))
    }

    /// Requests in force at the end of the last tick.
    pub fn requests(&self) -> &[usize] {
        &self.requests
    }

    fn check_running(&self) -> Result<()> {
        if self.step >= self.config.decision_steps() {
            return Err(Error::State("episode already finished; call reset".into()));
        }
        Ok(())
    }

    fn advance<F>(&mut self, mut per_tick: F) -> Result<StepOutcome>
    where
        F: FnMut(f64) -> Option<Vec<usize>>,
    {
        let n = self.num_agents();
        let before: Vec<f64> = (0..n).map(|i| self.sim.queue_length(i) as f64).collect();
        let w0: Vec<f64> = (0..n).map(|i| self.sim.state().waiting(i)).collect();
        for _ in 0..self.config.ticks_per_decision() {
            if let Some(a) = per_tick(self.sim.state().time_s()) {
                self.apply_actions(&a)?;
            }
            self.sim.step(&self.requests)?;
        }
        let queues: Vec<f64> = (0..n).map(|i| self.sim.queue_length(i) as f64).collect();
        let waiting: Vec<f64> = (0..n).map(|i| self.sim.state().waiting(i) - w0[i]).collect();
        let rewards: Vec<f64> = (0..n)
            .map(|i| match self.config.reward_kind {
                RewardKind::Piecewise => reward(queues[i], before[i], waiting[i], &self.config.reward),
                RewardKind::QueueDelta => queue_delta_reward(queues[i], before[i]),
            })
            .collect();
        self.step += 1;
        Ok(StepOutcome {
            obs: self.observe(),
            global_reward: global_reward(&rewards),
            rewards,
            queues,
            waiting,
            done: self.step >= self.config.decision_steps(),
        })
    }

    /// Runs a full episode. A policy error stops the episode and is recorded in
    /// `trace.aborted`; whatever was collected until then is returned.
    pub fn run_episode<P>(&mut self, seed: u64, mut policy: P) -> Result<Episode>
    where
        P: FnMut(usize, &[Vec<f64>]) -> Result<Vec<usize>>,
    {
        self.run_loop(seed, |env, k, obs| {
            let actions = policy(k, obs).map_err(|e| Error::State(format!("policy failed at step {k}: {e}")))?;
            let out = env.step(&actions)?;
            Ok((actions, out))
        })
    }

    /// Runs a full episode under a per-tick schedule, as for fixed-time control.
    pub fn run_episode_scheduled<F>(&mut self, seed: u64, mut schedule: F) -> Result<Episode>
    where
        F: FnMut(f64) -> Vec<usize>,
    {
        self.run_loop(seed, |env, _, _| {
            let out = env.step_scheduled(&mut schedule)?;
            Ok((env.requests.clone(), out))
        })
    }

    fn run_loop<F>(&mut self, seed: u64, mut decide: F) -> Result<Episode>
    where
        F: FnMut(&mut Self, usize, &[Vec<f64>]) -> Result<(Vec<usize>, StepOutcome)>,
    {
        let mut obs = self.reset(seed)?;
        let mut episode = Episode::default();
        loop {
            let k = self.step;
            let (actions, out) = match decide(self, k, &obs) {
                Ok(x) => x,
                Err(Error::State(msg)) => {
                    episode.trace.aborted = Some(msg);
                    return Ok(episode);
                }
                Err(e @ Error::Action(_)) => {
                    episode.trace.aborted = Some(format!("step {k}: {e}"));
                    return Ok(episode);
                }
                Err(e) => return Err(e),
            };
            episode.trace.record(&self.sim, &out.waiting);
            episode.transitions.push(Transition {
                k,
                obs: std::mem::take(&mut obs),
                actions,
                rewards: out.rewards,
                global_reward: out.global_reward,
                next_obs: out.obs.clone(),
                queues: out.queues,
            });
            obs = out.obs;
            if out.done {
                return Ok(episode);
            }
        }
    }
}

pub fn obs_width(graph: &TrafficGraph) -> usize {
    NUM_STAGES + 2 * graph.max_in_degree()
}

/// `[stage one-hot, q per incoming edge, density per incoming edge]`, zero-padded
/// to the largest in-degree.
pub fn observe(sim: &Simulator) -> Vec<Vec<f64>> {
    let graph = sim.graph();
    let pad = graph.max_in_degree();
    (0..graph.num_intersections())
        .map(|i| {
            let mut o = vec![0.0; NUM_STAGES + 2 * pad];
            o[sim.state().phase(i).stage()] = 1.0;
            for (slot, &j) in graph.incoming(i).iter().enumerate() {
                o[NUM_STAGES + slot] = sim.state().edge(j).queued() as f64;
                o[NUM_STAGES + pad + slot] = sim.density(j);
            }
            o
        })
        .collect()
}

/// One JSON object per decision step with fields `k`, `o`, `a`, `r`, `global_r`.
pub fn write_transcript<W: Write>(transitions: &[Transition], mut out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        k: usize,
        o: &'a [Vec<f64>],
        a: &'a [usize],
        r: &'a [f64],
        global_r: f64,
    }
    for t in transitions {
        let line = Line { k: t.k, o: &t.obs, a: &t.actions, r: &t.rewards, global_r: t.global_reward };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
