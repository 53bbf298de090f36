//! Tick-based queue simulator.
//!
//! Each tick: signals update, scheduled vehicles enter their source edge,
//! in-transit vehicles that reached the queue tail join it (or leave the
//! network on an exit edge), green approaches discharge at saturation flow,
//! and every queued vehicle adds `dt` of waiting time to its intersection.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::demand::{generate_demand, Arrival};
use super::phase::{PhaseMachine, PhaseTiming, Signal, NUM_STAGES};
use super::TrafficGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Tick length in seconds.
    pub dt: f64,
    /// Discharge rate in vehicles per lane per second.
    pub saturation_flow: f64,
    /// Road length occupied by one vehicle, in meters.
    pub vehicle_gap_m: f64,
    pub timing: PhaseTiming,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 1.0, saturation_flow: 0.5, vehicle_gap_m: 7.5, timing: PhaseTiming::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u64,
    pub source: u32,
    pub route: u32,
    /// Position of the current edge within the route.
    pub leg: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    /// Moving vehicles with the tick at which they reach the queue tail.
    in_transit: Vec<(u64, Vehicle)>,
    queue: VecDeque<Vehicle>,
    /// Fractional discharge capacity carried between ticks.
    credit: f64,
}

impl EdgeState {
    pub fn in_transit(&self) -> usize {
        self.in_transit.len()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn vehicles(&self) -> usize {
        self.in_transit.len() + self.queue.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    k: u64,
    dt: f64,
    edges: Vec<EdgeState>,
    /// Cumulative waiting seconds per intersection.
    waiting: Vec<f64>,
    phases: Vec<PhaseMachine>,
    entered: u64,
    exited: u64,
    next_id: u64,
}

impl SimState {
    pub fn new(graph: &TrafficGraph, dt: f64) -> Self {
        Self {
            k: 0,
            dt,
            edges: vec![EdgeState::default(); graph.edges().len()],
            waiting: vec![0.0; graph.num_intersections()],
            phases: vec![PhaseMachine::new(0); graph.num_intersections()],
            entered: 0,
            exited: 0,
            next_id: 0,
        }
    }

    pub fn clock(&self) -> u64 {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time_s(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn edge(&self, j: usize) -> &EdgeState {
        &self.edges[j]
    }

    pub fn phase(&self, i: usize) -> &PhaseMachine {
        &self.phases[i]
    }

    pub fn waiting(&self, i: usize) -> f64 {
        self.waiting[i]
    }

    pub fn entered(&self) -> u64 {
        self.entered
    }

    pub fn exited(&self) -> u64 {
        self.exited
    }

    pub fn in_transit_total(&self) -> u64 {
        self.edges.iter().map(|e| e.in_transit.len() as u64).sum()
    }

    pub fn queued_total(&self) -> u64 {
        self.edges.iter().map(|e| e.queue.len() as u64).sum()
    }

    /// `min(1, n tau / L)` for edge `j`.
    pub fn density(&self, graph: &TrafficGraph, j: usize, vehicle_gap_m: f64) -> f64 {
        (self.edges[j].vehicles() as f64 * vehicle_gap_m / graph.edge(j).length_m).min(1.0)
    }

    /// Total queued vehicles over the incoming edges of intersection `i`.
    pub fn queue_length(&self, graph: &TrafficGraph, i: usize) -> usize {
        graph.incoming(i).iter().map(|&j| self.edges[j].queue.len()).sum()
    }

    /// Queue on edge `j` split by the next edge each vehicle will take.
    pub fn queue_by_destination(&self, graph: &TrafficGraph, j: usize) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for v in &self.edges[j].queue {
            let route = &graph.route(v.source as usize, v.route as usize).edges;
            if let Some(&next) = route.get(v.leg as usize + 1) {
                *out.entry(next).or_insert(0) += 1;
            }
        }
        out
    }

    /// Every vehicle in the network with its edge and whether it is stopped.
    pub fn vehicles(&self) -> impl Iterator<Item = (usize, Vehicle, bool)> + '_ {
        self.edges.iter().enumerate().flat_map(|(j, e)| {
            e.in_transit
                .iter()
                .map(move |(_, v)| (j, *v, false))
                .chain(e.queue.iter().map(move |v| (j, *v, true)))
        })
    }

    fn check_conservation(&self) {
        let inside = self.in_transit_total() + self.queued_total();
        assert_eq!(
            self.entered,
            inside + self.exited,
            "vehicle conservation violated at tick {}: entered {} != inside {} + exited {}",
            self.k,
            self.entered,
            inside,
            self.exited
        );
    }
}

pub struct Simulator {
    graph: Arc<TrafficGraph>,
    config: SimConfig,
    state: SimState,
    schedule: Vec<Arrival>,
    cursor: usize,
    history: Vec<Vec<Signal>>,
}

impl Simulator {
    /// A simulator with no demand.
    pub fn new(graph: Arc<TrafficGraph>, config: SimConfig) -> Result<Self> {
        if !(config.dt > 0.0) || !(config.saturation_flow >= 0.0) || !(config.vehicle_gap_m > 0.0) {
            return Err(Error::config(format!("invalid simulator config {config:?}")));
        }
        let state = SimState::new(&graph, config.dt);
        let history = vec![Vec::new(); graph.num_intersections()];
        Ok(Self { graph, config, state, schedule: Vec::new(), cursor: 0, history })
    }

    /// Clears all vehicles and installs a freshly generated demand schedule.
    pub fn reset(&mut self, rates: &[f64], seed: u64, horizon_s: f64) -> Result<()> {
        let schedule = generate_demand(&self.graph, rates, seed, horizon_s, self.config.dt)?;
        self.reset_with_schedule(schedule);
        Ok(())
    }

    pub fn reset_with_schedule(&mut self, mut schedule: Vec<Arrival>) {
        schedule.sort();
        self.state = SimState::new(&self.graph, self.config.dt);
        self.schedule = schedule;
        self.cursor = 0;
        self.history.iter_mut().for_each(Vec::clear);
    }

    pub fn graph(&self) -> &Arc<TrafficGraph> {
        &self.graph
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn schedule(&self) -> &[Arrival] {
        &self.schedule
    }

    /// Per-tick signal history of intersection `i` since the last reset.
    pub fn history(&self, i: usize) -> &[Signal] {
        &self.history[i]
    }

    pub fn density(&self, j: usize) -> f64 {
        self.state.density(&self.graph, j, self.config.vehicle_gap_m)
    }

    pub fn queue_length(&self, i: usize) -> usize {
        self.state.queue_length(&self.graph, i)
    }

    /// Places a vehicle on `leg` of a route, either stopped in the queue or arriving next tick.
    /// Counts as entered. Meant for fixtures.
    pub fn insert_vehicle(&mut self, source: usize, route: usize, leg: usize, queued: bool) -> Result<()> {
        let len = self
            .graph
            .routes(source)
            .get(route)
            .ok_or_else(|| Error::Routing(format!("source {source} has no route {route}")))?
            .edges
            .len();
        if leg >= len {
            return Err(Error::Routing(format!("route has {len} legs, got leg {leg}")));
        }
        let v = Vehicle { id: self.state.next_id, source: source as u32, route: route as u32, leg: leg as u32 };
        self.state.next_id += 1;
        self.state.entered += 1;
        let edge = self.graph.route(source, route).edges[leg];
        let es = &mut self.state.edges[edge];
        if queued {
            es.queue.push_back(v);
        } else {
            es.in_transit.push((self.state.k + 1, v));
        }
        Ok(())
    }

    /// Advances one tick with the requested green stage per intersection.
    pub fn step(&mut self, requests: &[usize]) -> Result<()> {
        let n = self.graph.num_intersections();
        if requests.len() != n {
            return Err(Error::Action(format!("{} stage requests for {n} intersections", requests.len())));
        }
        if let Some((i, &r)) = requests.iter().enumerate().find(|(_, &r)| r >= NUM_STAGES) {
            return Err(Error::Action(format!("intersection {i} requested stage {r}, expected 0..{NUM_STAGES}")));
        }
        let graph = Arc::clone(&self.graph);
        let cfg = self.config;
        let st = &mut self.state;
        let k = st.k;

        let signals: Vec<Signal> = st
            .phases
            .iter_mut()
            .zip(requests)
            .map(|(p, &r)| p.begin_tick(r, &cfg.timing))
            .collect();
        for (h, s) in self.history.iter_mut().zip(&signals) {
            h.push(*s);
        }

        while let Some(a) = self.schedule.get(self.cursor).filter(|a| a.tick <= k) {
            let v = Vehicle { id: st.next_id, source: a.source as u32, route: a.route as u32, leg: 0 };
            st.next_id += 1;
            st.entered += 1;
            let edge = graph.sources()[a.source].edge;
            enter_edge(st, &graph, &cfg, edge, v, k);
            self.cursor += 1;
        }

        for j in 0..st.edges.len() {
            let es = &mut st.edges[j];
            if es.in_transit.iter().all(|(t, _)| *t > k) {
                continue;
            }
            let mut arrived: Vec<(u64, Vehicle)> = Vec::new();
            es.in_transit.retain(|&(t, v)| {
                if t <= k {
                    arrived.push((t, v));
                    false
                } else {
                    true
                }
            });
            arrived.sort_by_key(|&(t, v)| (t, v.id));
            if graph.is_exit(j) {
                st.exited += arrived.len() as u64;
            } else {
                es.queue.extend(arrived.into_iter().map(|(_, v)| v));
            }
        }

        for i in 0..n {
            let green = match signals[i] {
                Signal::Green(s) => Some(s),
                Signal::Yellow { .. } => None,
            };
            for &j in graph.incoming(i) {
                let served = green.is_some_and(|s| graph.program(i)[s].contains(&j));
                if !served {
                    st.edges[j].credit = 0.0;
                    continue;
                }
                let lanes = graph.edge(j).lanes as f64;
                let es = &mut st.edges[j];
                es.credit += cfg.saturation_flow * lanes * cfg.dt;
                let count = ((es.credit + 1e-9).floor() as usize).min(es.queue.len());
                es.credit -= count as f64;
                let leaving: Vec<Vehicle> = es.queue.drain(..count).collect();
                if es.queue.is_empty() {
                    es.credit = 0.0;
                }
                for mut v in leaving {
                    v.leg += 1;
                    let next = graph.route(v.source as usize, v.route as usize).edges[v.leg as usize];
                    enter_edge(st, &graph, &cfg, next, v, k);
                }
            }
        }

        for i in 0..n {
            st.waiting[i] += cfg.dt * st.queue_length(&graph, i) as f64;
        }
        for p in &mut st.phases {
            p.end_tick(cfg.dt);
        }
        st.k += 1;
        st.check_conservation();
        Ok(())
    }
}

/// Puts a moving vehicle on edge `j`; it reaches the queue tail after free-flow
/// travel over the unoccupied length, at least one tick later.
fn enter_edge(st: &mut SimState, graph: &TrafficGraph, cfg: &SimConfig, j: usize, v: Vehicle, k: u64) {
    let e = graph.edge(j);
    let free = (e.length_m - st.edges[j].queue.len() as f64 * cfg.vehicle_gap_m).max(0.0);
    let ticks = ((free / e.speed_mps / cfg.dt) - 1e-9).ceil().max(1.0) as u64;
    st.edges[j].in_transit.push((k + ticks, v));
}
