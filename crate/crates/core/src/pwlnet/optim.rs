//! First-order optimizers over [`Parameterized`](super::Parameterized) models.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub method: Method,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            method: Method::Sgd,
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            method: Method::adam(),
        }
    }
}

/// Stateful optimizer. Moment buffers are keyed by parameter position, so one
/// optimizer must always be used with the same model.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update using each tensor's accumulated gradient, then clears it.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: Vec<(String, &mut Tensor)>) -> Result<()> {
        for (name, t) in &params {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric { param: name.clone() });
                }
            }
        }
        if self.first.len() < params.len() {
            self.first.resize(params.len(), Vec::new());
            self.second.resize(params.len(), Vec::new());
        }
        self.steps += 1;
        let lr = self.config.learning_rate;
        for (idx, (_, t)) in params.into_iter().enumerate() {
            let Some(grad) = t.take_grad() else { continue };
            match self.config.method {
                Method::Sgd => {
                    for (p, g) in t.values_mut().iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                Method::Adam { beta1, beta2, eps } => {
                    let m = &mut self.first[idx];
                    let v = &mut self.second[idx];
                    if m.len() != grad.len() {
                        *m = vec![0.0; grad.len()];
                        *v = vec![0.0; grad.len()];
                    }
                    let bc1 = 1.0 - beta1.powf(self.steps as f64);
                    let bc2 = 1.0 - beta2.powf(self.steps as f64);
                    for (((p, g), mi), vi) in t.values_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(p: f64, g: f64) -> Tensor {
        let mut t = Tensor::from_vec(vec![1], vec![p]).unwrap();
        t.accumulate_grad(&[g]).unwrap();
        t
    }

    #[test]
    fn sgd_step() {
        let mut t = scalar(1.0, 0.5);
        Optimizer::new(OptimizerConfig::sgd(0.01)).step(vec![("p".into(), &mut t)]).unwrap();
        assert!((t.values()[0] - 0.995).abs() < 1e-15);
        assert!(t.grad().is_none());
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut t = scalar(1.0, 0.0);
        Optimizer::new(OptimizerConfig::sgd(0.01)).step(vec![("p".into(), &mut t)]).unwrap();
        assert_eq!(t.values()[0], 1.0);
    }

    #[test]
    fn adam_first_step_is_bias_corrected() {
        // m = 0.1, v = 0.001; corrected both to 1, so the step is lr / (1 + eps).
        let mut t = scalar(0.0, 1.0);
        Optimizer::new(OptimizerConfig::adam(0.001)).step(vec![("p".into(), &mut t)]).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((t.values()[0] - expected).abs() < 1e-15, "{}", t.values()[0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = scalar(1.0, 0.1);
        let mut b = scalar(1.0, f64::NAN);
        let err = Optimizer::new(OptimizerConfig::sgd(0.1))
            .step(vec![("first".into(), &mut a), ("second".into(), &mut b)])
            .unwrap_err();
        match err {
            Error::Numeric { param } => assert_eq!(param, "second"),
            e => panic!("unexpected {e}"),
        }
        assert_eq!(a.values()[0], 1.0, "no partial update");
    }
}
