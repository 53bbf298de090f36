//! Network-level congestion metrics over per-step total waiting time.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time-average of the network-total waiting time.
    pub ave: f64,
    /// Temporal variance of the network-total waiting time.
    pub sta: f64,
}

/// `totals[t]` is `sum_i W_i(t)` for decision step `t`.
pub fn metrics(totals: &[f64]) -> Result<Metrics> {
    if totals.is_empty() {
        return Err(Error::data("metrics need at least one step"));
    }
    let n = totals.len() as f64;
    let ave = totals.iter().sum::<f64>() / n;
    let sta = totals.iter().map(|w| (w - ave).powi(2)).sum::<f64>() / n;
    Ok(Metrics { ave, sta })
}
