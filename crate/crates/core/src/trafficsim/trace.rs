//! Per-decision-step records of signals, queues, waiting time and densities.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Simulator;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub intersection: String,
    /// `G{stage}` or `Y{target}`.
    pub phase: String,
    pub queue: usize,
    /// Waiting seconds accumulated during this step.
    pub waiting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub step: usize,
    pub edge: String,
    pub density: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub densities: Vec<DensityRow>,
    /// `sum_i W_i` per step.
    pub totals: Vec<f64>,
    /// Set when the episode stopped early.
    pub aborted: Option<String>,
}

impl Trace {
    pub fn steps(&self) -> usize {
        self.totals.len()
    }

    /// Appends one step; `waiting[i]` is intersection `i`'s waiting time during the step.
    pub fn record(&mut self, sim: &Simulator, waiting: &[f64]) {
        let step = self.totals.len();
        let graph = sim.graph();
        for (i, &w) in waiting.iter().enumerate() {
            self.rows.push(TraceRow {
                step,
                intersection: graph.intersection_id(i).to_string(),
                phase: sim.state().phase(i).signal().label(),
                queue: sim.queue_length(i),
                waiting: w,
            });
        }
        for (j, e) in graph.edges().iter().enumerate() {
            self.densities.push(DensityRow { step, edge: e.id.clone(), density: sim.density(j) });
        }
        self.totals.push(waiting.iter().sum());
    }

    /// CSV with columns `step,intersection,phase,Q_i,W_i`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "intersection", "phase", "Q_i", "W_i"])?;
        for r in &self.rows {
            w.write_record([r.step.to_string(), r.intersection.clone(), r.phase.clone(), r.queue.to_string(), r.waiting.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with columns `step,edge,density`.
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "edge", "density"])?;
        for r in &self.densities {
            w.write_record([r.step.to_string(), r.edge.clone(), r.density.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
