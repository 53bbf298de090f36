//! Four-stage signal controller with yellow interlock and green-time bounds.

use serde::{Deserialize, Serialize};

pub const NUM_STAGES: usize = 4;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseTiming {
    pub yellow_s: f64,
    pub min_green_s: f64,
    pub max_green_s: f64,
}

impl Default for PhaseTiming {
    fn default() -> Self {
        Self { yellow_s: 2.0, min_green_s: 5.0, max_green_s: 50.0 }
    }
}

/// Signal shown during one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green(usize),
    Yellow { from: usize, to: usize },
}

impl Signal {
    /// Short label used in traces: `G2`, `Y3`.
    pub fn label(&self) -> String {
        match self {
            Signal::Green(s) => format!("G{s}"),
            Signal::Yellow { to, .. } => format!("Y{to}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMachine {
    signal: Signal,
    elapsed: f64,
}

impl PhaseMachine {
    pub fn new(stage: usize) -> Self {
        Self { signal: Signal::Green(stage), elapsed: 0.0 }
    }

    pub fn signal(&self) -> Signal {
        self.signal
    }

    /// Seconds spent in the current signal.
    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Stage reported to observers: the green stage, or the stage being left during yellow.
    pub fn stage(&self) -> usize {
        match self.signal {
            Signal::Green(s) => s,
            Signal::Yellow { from, .. } => from,
        }
    }

    /// Applies any transition due at the start of a tick and returns the signal for that tick.
    pub fn begin_tick(&mut self, request: usize, timing: &PhaseTiming) -> Signal {
        match self.signal {
            Signal::Green(stage) => {
                let wants_change = request != stage && self.elapsed + EPS >= timing.min_green_s;
                let forced = self.elapsed + EPS >= timing.max_green_s;
                if wants_change || forced {
                    let to = if request != stage { request } else { (stage + 1) % NUM_STAGES };
                    self.signal = Signal::Yellow { from: stage, to };
                    self.elapsed = 0.0;
                }
            }
            Signal::Yellow { to, .. } => {
                if self.elapsed + EPS >= timing.yellow_s {
                    self.signal = Signal::Green(to);
                    self.elapsed = 0.0;
                }
            }
        }
        self.signal
    }

    pub fn end_tick(&mut self, dt: f64) {
        self.elapsed += dt;
    }
}

/// Checks a per-tick signal history for interlock and green-time violations.
///
/// The final run is treated as possibly truncated and only checked against the
/// upper bound.
pub fn phase_violations(history: &[Signal], dt: f64, timing: &PhaseTiming) -> Vec<String> {
    let mut runs: Vec<(Signal, usize, usize)> = Vec::new();
    for (t, s) in history.iter().enumerate() {
        match runs.last_mut() {
            Some((sig, _, len)) if sig == s => *len += 1,
            _ => runs.push((*s, t, 1)),
        }
    }
    let mut out = Vec::new();
    let last = runs.len().saturating_sub(1);
    for (r, &(sig, start, len)) in runs.iter().enumerate() {
        let secs = len as f64 * dt;
        let complete = r != last;
        match sig {
            Signal::Green(_) => {
                if secs > timing.max_green_s + EPS || (complete && secs + EPS < timing.min_green_s) {
                    out.push(format!("green of {secs} s starting at tick {start}"));
                }
            }
            Signal::Yellow { from, to } => {
                if from == to {
                    out.push(format!("yellow to the same stage at tick {start}"));
                }
                if secs > timing.yellow_s + EPS || (complete && (secs - timing.yellow_s).abs() > EPS) {
                    out.push(format!("yellow of {secs} s starting at tick {start}"));
                }
            }
        }
        if let Some(&(next, nstart, _)) = runs.get(r + 1) {
            match (sig, next) {
                (Signal::Green(a), Signal::Green(b)) if a != b => {
                    out.push(format!("green {a} to green {b} without yellow at tick {nstart}"))
                }
                (Signal::Green(a), Signal::Yellow { from, .. }) if a != from => {
                    out.push(format!("yellow at tick {nstart} does not leave green {a}"))
                }
                (Signal::Yellow { to, .. }, Signal::Green(b)) if to != b => {
                    out.push(format!("yellow toward {to} ended in green {b} at tick {nstart}"))
                }
                (Signal::Yellow { .. }, Signal::Yellow { .. }) => {
                    out.push(format!("consecutive yellows at tick {nstart}"))
                }
                _ => {}
            }
        }
    }
    out
}
