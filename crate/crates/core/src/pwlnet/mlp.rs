//! Stacked affine layers with ReLU, BReLU or identity activations.
//!
//! Forward evaluation through [`Mlp::forward`] is pure. Training goes through an
//! [`EvalContext`], which records the activations of one forward pass so that
//! [`EvalContext::backward`] can produce parameter gradients for it.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::grid::BiasGrid;
use super::tensor::{Gradients, Parameterized, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Brelu { grid: BiasGrid },
}

impl Activation {
    fn output_width(&self, width: usize) -> usize {
        match self {
            Activation::Identity | Activation::Relu => width,
            Activation::Brelu { grid } => grid.width(),
        }
    }
}

/// Weight initialization for a new layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    /// Uniform in `±sqrt(6 / fan_in)`.
    He,
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    Xavier,
}

/// `y = activation(W x + b)` with `W` stored row-major as `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if let Activation::Brelu { grid } = &activation {
            if grid.dims() != out_dim {
                return Err(Error::shape(format!(
                    "BReLU grid covers {} dims but layer has {out_dim} outputs",
                    grid.dims()
                )));
            }
        }
        let mut weight = Tensor::zeros(&[out_dim, in_dim])?;
        let limit = match init {
            Init::Zeros => None,
            Init::He => Some((6.0 / in_dim as f64).sqrt()),
            Init::Xavier => Some((6.0 / (in_dim + out_dim) as f64).sqrt()),
        };
        if let Some(limit) = limit {
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            for w in weight.values_mut() {
                *w = dist.sample(rng);
            }
        }
        Ok(Self {
            weight,
            bias: Tensor::zeros(&[out_dim])?,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Width of the affine part.
    pub fn affine_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.activation.output_width(self.affine_dim())
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.in_dim();
        let w = self.weight.values();
        self.bias
            .values()
            .iter()
            .enumerate()
            .map(|(o, b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                row.iter().zip(x).fold(*b, |acc, (wi, xi)| wi.mul_add(*xi, acc))
            })
            .collect()
    }

    fn activate(&self, z: &[f64], out: &mut Vec<f64>, pattern: Option<&mut Vec<bool>>) {
        out.clear();
        match &self.activation {
            Activation::Identity => out.extend_from_slice(z),
            Activation::Relu => {
                out.extend(z.iter().map(|v| v.max(0.0)));
                if let Some(p) = pattern {
                    p.extend(z.iter().map(|v| *v > 0.0));
                }
            }
            Activation::Brelu { grid } => {
                let mut pattern = pattern;
                for (zi, row) in z.iter().zip(grid.rows()) {
                    for b in row {
                        out.push((zi - b).max(0.0));
                        if let Some(p) = pattern.as_deref_mut() {
                            p.push(*zi > *b);
                        }
                    }
                }
            }
        }
    }

    /// Backpropagates `dy` (w.r.t. post-activation output) to the pre-activation.
    fn activation_backward(&self, z: &[f64], dy: &[f64]) -> Vec<f64> {
        match &self.activation {
            Activation::Identity => dy.to_vec(),
            Activation::Relu => z
                .iter()
                .zip(dy)
                .map(|(zi, g)| if *zi > 0.0 { *g } else { 0.0 })
                .collect(),
            Activation::Brelu { grid } => {
                let mut k = 0;
                z.iter()
                    .zip(grid.rows())
                    .map(|(zi, row)| {
                        let mut acc = 0.0;
                        for b in row {
                            // Subgradient 0 exactly at the kink.
                            if *zi > *b {
                                acc += dy[k];
                            }
                            k += 1;
                        }
                        acc
                    })
                    .collect()
            }
        }
    }
}

/// A feed-forward network of [`Layer`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpRepr", into = "MlpRepr")]
pub struct Mlp {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct MlpRepr {
    layers: Vec<Layer>,
}

impl TryFrom<MlpRepr> for Mlp {
    type Error = Error;

    fn try_from(r: MlpRepr) -> Result<Self> {
        Mlp::new(r.layers)
    }
}

impl From<Mlp> for MlpRepr {
    fn from(m: Mlp) -> Self {
        MlpRepr { layers: m.layers }
    }
}

/// Declarative description of one layer for [`Mlp::build`].
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Identity(usize),
    Relu(usize),
    /// Affine to `width`, then BReLU with the default grid at `(nu, eta)` on every unit.
    Brelu { width: usize, nu: f64, eta: f64 },
    /// Affine to `grid.dims()`, then BReLU with an explicit grid.
    BreluGrid(BiasGrid),
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network needs at least one layer"));
        }
        for (t, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape() != [l.affine_dim()] {
                return Err(Error::shape(format!("layer {t} has inconsistent weight/bias shapes")));
            }
            if let Activation::Brelu { grid } = &l.activation {
                if grid.dims() != l.affine_dim() {
                    return Err(Error::shape(format!(
                        "layer {t}: BReLU grid covers {} dims, affine width is {}",
                        grid.dims(),
                        l.affine_dim()
                    )));
                }
            }
        }
        for (t, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {t} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    t + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Builds a network from `input` width and layer specs; `final_init` applies to the last layer.
    pub fn build<R: Rng + ?Sized>(
        input: usize,
        specs: &[LayerSpec],
        init: Init,
        final_init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut width = input;
        for (t, spec) in specs.iter().enumerate() {
            let init = if t + 1 == specs.len() { final_init } else { init };
            let (out, act) = match spec {
                LayerSpec::Identity(w) => (*w, Activation::Identity),
                LayerSpec::Relu(w) => (*w, Activation::Relu),
                LayerSpec::Brelu { width, nu, eta } => (
                    *width,
                    Activation::Brelu {
                        grid: BiasGrid::standard(*width, *nu, *eta)?,
                    },
                ),
                LayerSpec::BreluGrid(grid) => (grid.dims(), Activation::Brelu { grid: grid.clone() }),
            };
            let layer = Layer::new(width, out, act, init, rng)?;
            width = layer.out_dim();
            layers.push(layer);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            let z = layer.affine(&cur);
            layer.activate(&z, &mut next, None);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Output together with the on/off state of every ReLU and BReLU unit.
    ///
    /// Two inputs with equal patterns lie in the same linear region.
    pub fn forward_with_pattern(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_input(x)?;
        let mut pattern = Vec::new();
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            let z = layer.affine(&cur);
            layer.activate(&z, &mut next, Some(&mut pattern));
            std::mem::swap(&mut cur, &mut next);
        }
        Ok((cur, pattern))
    }

    /// Sum of absolute weight-matrix entries (biases excluded).
    pub fn l1_weights(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.values())
            .map(|w| w.abs())
            .sum()
    }

    /// Adds the subgradient of `lambda * l1_weights()` to `grads`.
    pub fn add_l1_subgradient(&self, lambda: f64, grads: &mut Gradients) {
        for (t, layer) in self.layers.iter().enumerate() {
            for (g, w) in grads.0[2 * t].iter_mut().zip(layer.weight.values()) {
                *g += lambda * signum0(*w);
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(t, l)| {
                [
                    (format!("layers.{t}.weight"), &l.weight),
                    (format!("layers.{t}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(t, l)| {
                [
                    (format!("layers.{t}.weight"), &mut l.weight),
                    (format!("layers.{t}.bias"), &mut l.bias),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Record {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

/// Result of [`EvalContext::backward`].
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the network input.
    pub input_grad: Vec<f64>,
}

/// Per-thread evaluation state holding the activations of the last forward pass.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    record: Option<Record>,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward(&mut self, net: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
        net.check_input(x)?;
        let mut inputs = Vec::with_capacity(net.layers.len());
        let mut pre = Vec::with_capacity(net.layers.len());
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &net.layers {
            let z = layer.affine(&cur);
            layer.activate(&z, &mut next, None);
            inputs.push(std::mem::replace(&mut cur, std::mem::take(&mut next)));
            pre.push(z);
        }
        self.record = Some(Record { inputs, pre });
        Ok(cur)
    }

    pub fn clear(&mut self) {
        self.record = None;
    }

    /// Gradients of a loss with output gradient `dy` for the recorded pass.
    pub fn backward(&self, net: &Mlp, dy: &[f64]) -> Result<Backward> {
        let record = self
            .record
            .as_ref()
            .ok_or_else(|| Error::State("backward called without a recorded forward pass".into()))?;
        if record.pre.len() != net.layers.len()
            || record.inputs.first().map(Vec::len) != Some(net.input_dim())
        {
            return Err(Error::State("recorded pass belongs to a different network".into()));
        }
        if dy.len() != net.output_dim() {
            return Err(Error::shape(format!(
                "output gradient has {} entries, network outputs {}",
                dy.len(),
                net.output_dim()
            )));
        }
        let mut blocks = vec![Vec::new(); 2 * net.layers.len()];
        let mut grad = dy.to_vec();
        for (t, layer) in net.layers.iter().enumerate().rev() {
            let dz = layer.activation_backward(&record.pre[t], &grad);
            let x = &record.inputs[t];
            let n_in = layer.in_dim();
            let mut dw = vec![0.0; dz.len() * n_in];
            for (o, g) in dz.iter().enumerate() {
                if *g != 0.0 {
                    for (d, xi) in dw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                        *d = g * xi;
                    }
                }
            }
            let w = layer.weight.values();
            let mut dx = vec![0.0; n_in];
            for (o, g) in dz.iter().enumerate() {
                if *g != 0.0 {
                    for (d, wi) in dx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *d += g * wi;
                    }
                }
            }
            blocks[2 * t] = dw;
            blocks[2 * t + 1] = dz;
            grad = dx;
        }
        Ok(Backward {
            grads: Gradients(blocks),
            input_grad: grad,
        })
    }
}
