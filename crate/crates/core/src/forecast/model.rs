//! Direct multi-horizon forecasting with one linear-map EHH model per horizon.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{component_names, make_samples, split, SeriesDataset};
use super::metrics::{evaluate, ForecastMetrics};
use crate::ehh::{fit_linear_ehh, LinearEhh, LinearEhhConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastConfig {
    /// Input window in steps.
    pub window: usize,
    pub horizons: Vec<usize>,
    pub model: LinearEhhConfig,
    pub seed: u64,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        let mut model = LinearEhhConfig { width: 16, ..Default::default() };
        // 1e-4 overfits the pair terms and loses to persistence at short horizons
        model.fit.lambda = 1e-2;
        Self { window: 12, horizons: vec![3, 6, 9], model, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    pub horizon: usize,
    pub test: ForecastMetrics,
    pub persistence: ForecastMetrics,
    pub validation_r2: f64,
    /// `W` entries plus EHH output weights and intercepts.
    pub params: usize,
    pub neurons: usize,
    /// Importance of each `(node, lag)` input component.
    pub sigma: Vec<(String, f64)>,
    pub model: LinearEhh,
}

impl ForecastResult {
    /// The metrics record: horizon, MAE, R2, RMSE, params, neurons.
    pub fn metrics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "horizon": self.horizon,
            "MAE": self.test.mae,
            "R2": self.test.r2,
            "RMSE": self.test.rmse,
            "R2_defined": self.test.r2_defined,
            "params": self.params,
            "neurons": self.neurons,
            "persistence": self.persistence,
        })
    }

    pub fn write_sigma_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component", "sigma"])?;
        for (name, s) in &self.sigma {
            w.write_record([name.as_str(), &s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Total importance per lag, summed over nodes.
    pub fn sigma_by_lag(&self, window: usize) -> Vec<f64> {
        let mut out = vec![0.0; window];
        for (k, (_, s)) in self.sigma.iter().enumerate() {
            out[k % window] += s;
        }
        out
    }
}

fn destandardize(ds: &SeriesDataset, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| r.iter().enumerate().map(|(i, z)| ds.destandardize(i, *z)).collect()).collect()
}

/// Trains on the first 60% of windows, selects on the next 20% and scores on the rest.
pub fn forecast_run(ds: &SeriesDataset, horizon: usize, config: &ForecastConfig) -> Result<ForecastResult> {
    let samples = make_samples(ds, config.window, horizon)?;
    let parts = split(&samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(horizon as u64));
    let (model, report) = fit_linear_ehh(&parts.train.xs, &parts.train.ys, &parts.val.xs, &parts.val.ys, &config.model, &mut rng)?;

    let pred_z = parts.test.xs.iter().map(|x| model.predict(x)).collect::<Result<Vec<_>>>()?;
    let target = destandardize(ds, &parts.test.ys);
    let test = evaluate(&destandardize(ds, &pred_z), &target)?;
    let persistence = evaluate(&destandardize(ds, &parts.test.last_observed(ds.nodes())), &target)?;
    if !(test.mae.is_finite() && test.rmse.is_finite()) {
        return Err(Error::Numeric { param: format!("forecast h={horizon}") });
    }

    let (_, inv) = model.importance(&parts.train.xs)?;
    let sigma = component_names(ds, config.window).into_iter().zip(inv.sigma_in).collect();
    Ok(ForecastResult {
        horizon,
        test,
        persistence,
        validation_r2: report.validation_r2,
        params: model.w.len() + model.ehh.weights().len() + model.ehh.intercept().len(),
        neurons: model.ehh.node_count(),
        sigma,
        model,
    })
}

/// One independent model per configured horizon, trained in parallel.
pub fn forecast_all(ds: &SeriesDataset, config: &ForecastConfig) -> Result<Vec<ForecastResult>> {
    if config.horizons.is_empty() {
        return Err(Error::config("no forecast horizons configured"));
    }
    config.horizons.par_iter().map(|&h| forecast_run(ds, h, config)).collect()
}
