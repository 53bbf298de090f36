//! Output-weight fitting for a fixed EHH structure.
//!
//! With the hidden structure and biases frozen the network is linear in its
//! output weights, so training is an l1-penalised least-squares problem:
//!
//! ```text
//! minimize  (1/n) sum_i ||y_i - alpha_0 - alpha^T z(x_i)||^2 + lambda * sum |alpha|
//! ```
//!
//! The intercept is unpenalised and eliminated by centring. `lambda == 0` is
//! solved directly as a minimum-norm least-squares problem; otherwise cyclic
//! coordinate descent with soft-thresholding runs on the centred Gram matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::EhhNetwork;
use crate::{linalg, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// l1 penalty on the output weights.
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Stop once the largest coordinate change in a sweep falls below this.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            max_sweeps: 5_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub mse: f64,
    pub nonzero: usize,
    pub sweeps: usize,
}

/// Mean over samples of the squared error summed over outputs.
pub fn mse(net: &EhhNetwork, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    let mut acc = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let h = net.forward(x)?;
        acc += h.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    Ok(acc / xs.len().max(1) as f64)
}

/// Fits `alpha` and `alpha_0` in place; the structure and biases stay fixed.
pub fn ehh_train(net: &mut EhhNetwork, xs: &[Vec<f64>], ys: &[Vec<f64>], config: &FitConfig) -> Result<FitReport> {
    if xs.is_empty() {
        return Err(Error::data("EHH training set is empty"));
    }
    if xs.len() != ys.len() {
        return Err(Error::shape(format!("{} inputs but {} targets", xs.len(), ys.len())));
    }
    if !(config.lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be >= 0, got {}", config.lambda)));
    }
    let n = xs.len();
    let n_out = net.output_dim();
    let f = net.node_count();
    if let Some(bad) = ys.iter().position(|y| y.len() != n_out) {
        return Err(Error::shape(format!("target {bad} does not have {n_out} outputs")));
    }

    let mut z = DMatrix::<f64>::zeros(n, f);
    for (i, x) in xs.iter().enumerate() {
        let zi = net.node_outputs(x)?;
        for (k, v) in zi.into_iter().enumerate() {
            z[(i, k)] = v;
        }
    }
    let y = DMatrix::from_fn(n, n_out, |i, o| ys[i][o]);
    let z_mean: Vec<f64> = (0..f).map(|k| z.column(k).mean()).collect();
    let y_mean: Vec<f64> = (0..n_out).map(|o| y.column(o).mean()).collect();
    let zc = DMatrix::from_fn(n, f, |i, k| z[(i, k)] - z_mean[k]);
    let yc = DMatrix::from_fn(n, n_out, |i, o| y[(i, o)] - y_mean[o]);

    let mut alpha = DMatrix::<f64>::zeros(f, n_out);
    let mut sweeps = 0;
    if config.lambda == 0.0 {
        alpha = linalg::lstsq(&zc, &yc)?;
    } else {
        let gram = (zc.transpose() * &zc) / n as f64;
        let cross = (zc.transpose() * &yc) / n as f64;
        let half_lambda = config.lambda / 2.0;
        for o in 0..n_out {
            // residual correlation r = c - G alpha, kept up to date incrementally
            let mut r: Vec<f64> = cross.column(o).iter().copied().collect();
            let mut a = vec![0.0; f];
            for sweep in 0..config.max_sweeps {
                let mut max_delta: f64 = 0.0;
                for j in 0..f {
                    let gjj = gram[(j, j)];
                    if gjj <= 0.0 {
                        continue;
                    }
                    let rho = r[j] + gjj * a[j];
                    let new = soft_threshold(rho, half_lambda) / gjj;
                    let delta = new - a[j];
                    if delta != 0.0 {
                        for (k, rk) in r.iter_mut().enumerate() {
                            *rk -= gram[(k, j)] * delta;
                        }
                        a[j] = new;
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                sweeps = sweeps.max(sweep + 1);
                if max_delta < config.tolerance {
                    break;
                }
            }
            for (k, v) in a.into_iter().enumerate() {
                alpha[(k, o)] = v;
            }
        }
    }

    for (k, row) in net.weights_mut().chunks_mut(n_out).enumerate() {
        for (o, w) in row.iter_mut().enumerate() {
            *w = alpha[(k, o)];
        }
    }
    for (o, b) in net.intercept_mut().iter_mut().enumerate() {
        *b = y_mean[o] - (0..f).map(|k| z_mean[k] * alpha[(k, o)]).sum::<f64>();
    }
    if net.weights().iter().chain(net.intercept()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric { param: "alpha".into() });
    }

    Ok(FitReport {
        mse: mse(net, xs, ys)?,
        nonzero: net.weights().iter().filter(|w| w.abs() > 1e-6).count(),
        sweeps,
    })
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ehh::EhhConfig;
    use crate::pwlnet::BiasGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn structure(seed: u64) -> EhhNetwork {
        let grid = BiasGrid::standard(3, 1.0, 0.0).unwrap();
        let cfg = EhhConfig { max_order: 2, candidate_cap: Some(20) };
        EhhNetwork::generate(grid, 2, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn sample_inputs(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(-2.5..2.5)).collect())
            .collect()
    }

    #[test]
    fn recovers_known_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut truth = structure(3);
        for w in truth.weights_mut() {
            *w = if rng.random_bool(0.3) { rng.random_range(-1.0..1.0) } else { 0.0 };
        }
        truth.intercept_mut().copy_from_slice(&[0.5, -1.0]);
        let xs = sample_inputs(400, &mut rng);
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| truth.forward(x).unwrap()).collect();

        let mut net = truth.clone();
        net.weights_mut().iter_mut().for_each(|w| *w = 0.0);
        let report = ehh_train(&mut net, &xs, &ys, &FitConfig { lambda: 0.0, ..Default::default() }).unwrap();
        assert!(report.mse <= 1e-6, "mse {}", report.mse);
    }

    #[test]
    fn huge_penalty_leaves_intercept_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = sample_inputs(50, &mut rng);
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * 2.0 + 1.0, x[1].abs()]).collect();
        let mut net = structure(1);
        ehh_train(&mut net, &xs, &ys, &FitConfig { lambda: 1e6, ..Default::default() }).unwrap();
        assert!(net.weights().iter().all(|w| w.abs() < 1e-12));
        let mean0 = ys.iter().map(|y| y[0]).sum::<f64>() / 50.0;
        let pred = net.forward(&xs[0]).unwrap();
        assert!((pred[0] - mean0).abs() < 1e-9);
    }

    #[test]
    fn single_sample_interpolates() {
        let mut net = structure(4);
        let xs = vec![vec![0.3, -0.7, 1.2]];
        let ys = vec![vec![4.0, -2.0]];
        let report = ehh_train(&mut net, &xs, &ys, &FitConfig { lambda: 0.0, ..Default::default() }).unwrap();
        assert!(report.mse < 1e-20);
    }

    #[test]
    fn empty_dataset_is_data_error() {
        let mut net = structure(4);
        assert!(matches!(ehh_train(&mut net, &[], &[], &FitConfig::default()), Err(Error::Data(_))));
    }

    #[test]
    fn sparsity_non_increasing_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = sample_inputs(300, &mut rng);
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![(x[0] - 0.2).max(0.0) - 0.5 * x[1].min(x[2]).max(0.0) + rng.random_range(-0.1..0.1), x[2]])
            .collect();
        let mut last = usize::MAX;
        for lambda in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let mut net = structure(5);
            let r = ehh_train(&mut net, &xs, &ys, &FitConfig { lambda, ..Default::default() }).unwrap();
            assert!(r.nonzero <= last, "lambda {lambda}: {} > {last}", r.nonzero);
            last = r.nonzero;
        }
    }
}
