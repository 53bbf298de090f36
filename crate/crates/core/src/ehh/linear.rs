//! An EHH network behind a learned linear input map `x_tilde = W x`.
//!
//! `W` starts from reduced-rank regression directions and is then refined by
//! gradient steps on the squared error, alternating with refits of the EHH
//! output weights. The best model on held-out data is kept.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{anova_decompose, ehh_train, importance_inverse, AnovaReport, EhhConfig, EhhNetwork, FitConfig, InverseImportance};
use crate::pwlnet::{BiasGrid, Optimizer, OptimizerConfig, Tensor};
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEhh {
    /// `(width, input_dim)` row-major.
    pub w: Tensor,
    pub ehh: EhhNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearEhhConfig {
    /// Width of `x_tilde`.
    pub width: usize,
    pub ehh: EhhConfig,
    pub fit: FitConfig,
    /// Rounds of `refine_steps` gradient steps on `W`, each followed by a refit.
    pub refine_rounds: usize,
    pub refine_steps: usize,
    pub refine_lr: f64,
}

impl Default for LinearEhhConfig {
    fn default() -> Self {
        Self {
            width: 8,
            ehh: EhhConfig::default(),
            fit: FitConfig { lambda: 1e-4, max_sweeps: 500, tolerance: 1e-8 },
            refine_rounds: 5,
            refine_steps: 20,
            refine_lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEhhReport {
    pub train_r2: f64,
    pub validation_r2: f64,
    /// Refinement round that produced the kept model; 0 is the initial fit.
    pub best_round: usize,
}

impl LinearEhh {
    pub fn width(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        self.w.values().chunks(d).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!("input of width {} for a map over {}", x.len(), self.input_dim())));
        }
        self.ehh.forward(&self.transform(x))
    }

    /// Coefficient of determination pooled over outputs, each centred on its own mean.
    pub fn r2(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
        if xs.is_empty() {
            return Err(Error::data("r2 of an empty set"));
        }
        let n_out = ys[0].len();
        let mean: Vec<f64> = (0..n_out).map(|o| ys.iter().map(|y| y[o]).sum::<f64>() / ys.len() as f64).collect();
        let (mut sse, mut sst) = (0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            let h = self.predict(x)?;
            for o in 0..n_out {
                sse += (y[o] - h[o]).powi(2);
                sst += (y[o] - mean[o]).powi(2);
            }
        }
        Ok(if sst > 0.0 {
            1.0 - sse / sst
        } else if sse == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        })
    }

    /// ANOVA importances of `x_tilde` over `xs`, mapped back to the raw inputs.
    pub fn importance(&self, xs: &[Vec<f64>]) -> Result<(AnovaReport, InverseImportance)> {
        let xt: Vec<Vec<f64>> = xs.iter().map(|x| self.transform(x)).collect();
        let report = anova_decompose(&self.ehh, &xt)?;
        let inv = importance_inverse(self.w.values(), self.width(), self.input_dim(), &report.combined())?;
        Ok((report, inv))
    }

    /// Gradient of the mean squared error with respect to `W`.
    fn transform_gradient(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        let mut grad = vec![0.0; self.w.len()];
        let scale = 2.0 / xs.len() as f64;
        for (x, y) in xs.iter().zip(ys) {
            let xt = self.transform(x);
            let h = self.ehh.forward(&xt)?;
            let dh: Vec<f64> = h.iter().zip(y).map(|(a, b)| scale * (a - b)).collect();
            let (_, dxt) = self.ehh.backward(&xt, &dh)?;
            for (r, g) in dxt.iter().enumerate() {
                if *g != 0.0 {
                    for (acc, xi) in grad[r * d..(r + 1) * d].iter_mut().zip(x) {
                        *acc += g * xi;
                    }
                }
            }
        }
        Ok(grad)
    }
}

/// Fits `W` and the EHH weights on the training set, selecting on the
/// validation set (or the training set when it is empty).
pub fn fit_linear_ehh<R: Rng + ?Sized>(
    x_train: &[Vec<f64>],
    y_train: &[Vec<f64>],
    x_val: &[Vec<f64>],
    y_val: &[Vec<f64>],
    config: &LinearEhhConfig,
    rng: &mut R,
) -> Result<(LinearEhh, LinearEhhReport)> {
    if x_train.is_empty() || x_train.len() != y_train.len() || x_val.len() != y_val.len() {
        return Err(Error::data(format!(
            "training set of {} inputs / {} targets, validation {} / {}",
            x_train.len(),
            y_train.len(),
            x_val.len(),
            y_val.len()
        )));
    }
    if config.width == 0 {
        return Err(Error::config("EHH input width must be >= 1"));
    }
    let (xv, yv) = if x_val.is_empty() { (x_train, y_train) } else { (x_val, y_val) };

    let w0 = initial_transform(x_train, y_train, config.width, rng);
    let mut model = fit_on_transform(w0, x_train, y_train, config, rng)?;
    let mut best_val = model.r2(xv, yv)?;
    let mut best = model.clone();
    let mut best_round = 0;

    let mut opt = Optimizer::new(OptimizerConfig::adam(config.refine_lr));
    for round in 1..=config.refine_rounds {
        for _ in 0..config.refine_steps {
            let grad = model.transform_gradient(x_train, y_train)?;
            model.w.accumulate_grad(&grad)?;
            opt.step(vec![("W".to_string(), &mut model.w)])?;
        }
        let xt: Vec<Vec<f64>> = x_train.iter().map(|x| model.transform(x)).collect();
        ehh_train(&mut model.ehh, &xt, y_train, &config.fit)?;
        let val = model.r2(xv, yv)?;
        if val > best_val {
            best_val = val;
            best = model.clone();
            best_round = round;
        }
    }
    let report = LinearEhhReport { train_r2: best.r2(x_train, y_train)?, validation_r2: best_val, best_round };
    Ok((best, report))
}

/// Rows of `W`: reduced-rank regression directions, then principal directions
/// of the inputs, then random directions, made independent by Gram–Schmidt and
/// scaled so each `x_tilde` component has unit variance.
fn initial_transform<R: Rng + ?Sized>(xs: &[Vec<f64>], ys: &[Vec<f64>], rows: usize, rng: &mut R) -> DMatrix<f64> {
    let n = xs.len();
    let d = xs[0].len();
    let m = ys[0].len();
    let x_mean: Vec<f64> = (0..d).map(|c| xs.iter().map(|x| x[c]).sum::<f64>() / n as f64).collect();
    let y_mean: Vec<f64> = (0..m).map(|c| ys.iter().map(|y| y[c]).sum::<f64>() / n as f64).collect();
    let xc = DMatrix::from_fn(n, d, |i, c| xs[i][c] - x_mean[c]);
    let yc = DMatrix::from_fn(n, m, |i, c| ys[i][c] - y_mean[c]);

    let mut candidates: Vec<DVector<f64>> = Vec::new();
    if let Ok(b) = linalg::lstsq(&xc, &yc) {
        let fitted = &xc * &b;
        let (vals, vecs) = linalg::sorted_eigen(&(fitted.transpose() * &fitted));
        let top = vals.first().copied().unwrap_or(0.0);
        for (r, &v) in vals.iter().enumerate() {
            if v > top * 1e-10 && v > 0.0 {
                candidates.push(&b * vecs.column(r));
            }
        }
    }
    let (vals, vecs) = linalg::sorted_eigen(&(xc.transpose() * &xc));
    let top = vals.first().copied().unwrap_or(0.0);
    for (r, &v) in vals.iter().enumerate() {
        if v > top * 1e-10 && v > 0.0 {
            candidates.push(vecs.column(r).into_owned());
        }
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rows);
    let try_add = |v: DVector<f64>, basis: &mut Vec<DVector<f64>>| {
        let mut r = v.clone();
        for b in basis.iter() {
            r -= b * b.dot(&r);
        }
        let norm = r.norm();
        if norm > 1e-8 * v.norm().max(1e-300) {
            basis.push(r / norm);
        }
    };
    for c in candidates {
        if basis.len() == rows {
            break;
        }
        try_add(c, &mut basis);
    }
    while basis.len() < rows.min(d) {
        let v = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        try_add(v, &mut basis);
    }

    let mut w = DMatrix::zeros(basis.len(), d);
    for (r, b) in basis.iter().enumerate() {
        let proj = &xc * b;
        let sd = (proj.norm_squared() / n as f64).sqrt();
        let scale = if sd > 1e-12 { 1.0 / sd } else { 1.0 };
        w.set_row(r, &(b * scale).transpose());
    }
    w
}

/// Builds the EHH structure on the statistics of `W x` and fits its weights.
fn fit_on_transform<R: Rng + ?Sized>(
    w: DMatrix<f64>,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    config: &LinearEhhConfig,
    rng: &mut R,
) -> Result<LinearEhh> {
    let rows = w.nrows();
    let tensor = Tensor::from_vec(vec![rows, w.ncols()], linalg::to_row_major(&w))?;
    let placeholder = EhhNetwork::generate(BiasGrid::single(rows, 0.0)?, ys[0].len(), &EhhConfig { max_order: 1, candidate_cap: Some(0) }, rng)?;
    let mut model = LinearEhh { w: tensor, ehh: placeholder };
    let xt: Vec<Vec<f64>> = xs.iter().map(|x| model.transform(x)).collect();
    let stats: Vec<(f64, f64)> = (0..rows)
        .map(|r| {
            let mean = xt.iter().map(|x| x[r]).sum::<f64>() / xt.len() as f64;
            let var = xt.iter().map(|x| (x[r] - mean).powi(2)).sum::<f64>() / xt.len() as f64;
            let sd = var.sqrt();
            (if sd > 1e-12 { sd } else { 1.0 }, mean)
        })
        .collect();
    let grid = BiasGrid::from_stats(&stats)?;
    model.ehh = EhhNetwork::generate(grid, ys[0].len(), &config.ehh, rng)?;
    ehh_train(&mut model.ehh, &xt, ys, &config.fit)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let ys = xs.iter().map(|x| vec![(x[0] + x[1]).max(0.0) - 0.5 * x[4]]).collect();
        (xs, ys)
    }

    #[test]
    fn recovers_low_rank_hinge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (xs, ys) = data(400, &mut rng);
        let (xv, yv) = data(100, &mut rng);
        let cfg = LinearEhhConfig { width: 3, refine_rounds: 20, ..Default::default() };
        let (model, report) = fit_linear_ehh(&xs, &ys, &xv, &yv, &cfg, &mut rng).unwrap();
        assert!(report.validation_r2 > 0.9, "{report:?}");
        assert_eq!(model.width(), 3);
        let (_, inv) = model.importance(&xs).unwrap();
        assert_eq!(inv.sigma_in.len(), 6);
        assert!(inv.sigma_in.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn constant_zero_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (xs, _) = data(50, &mut rng);
        let ys = vec![vec![0.0, 0.0]; 50];
        let (model, _) = fit_linear_ehh(&xs, &ys, &[], &[], &LinearEhhConfig::default(), &mut rng).unwrap();
        for x in &xs {
            assert!(model.predict(x).unwrap().iter().all(|v| v.abs() <= 1e-3));
        }
    }

    #[test]
    fn empty_training_set_is_data_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            fit_linear_ehh(&[], &[], &[], &[], &LinearEhhConfig::default(), &mut rng),
            Err(Error::Data(_))
        ));
    }
}
