use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pwlnet::{BiasGrid, Gradients, Parameterized, Tensor};
use crate::{Error, Result};

/// A first-layer hinge `max(0, x[dim] - bias)` where `bias = grid[dim][level]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceNode {
    pub dim: usize,
    pub level: usize,
    pub bias: f64,
}

impl SourceNode {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        (x[self.dim] - self.bias).max(0.0)
    }
}

/// Structure options for [`EhhNetwork::generate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhhConfig {
    /// Highest interaction order `P`.
    pub max_order: usize,
    /// Maximum number of interaction nodes per order; `None` keeps every candidate.
    pub candidate_cap: Option<i64>,
}

impl Default for EhhConfig {
    fn default() -> Self {
        Self {
            max_order: 2,
            candidate_cap: Some(200),
        }
    }
}

/// Efficient hinging-hyperplanes network.
///
/// Nodes are ordered sources first, then interaction (min) nodes. The output is
/// `H = alpha_0 + sum_s alpha_s z_s(x)` with one weight column per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EhhRepr", into = "EhhRepr")]
pub struct EhhNetwork {
    input_dim: usize,
    grid: BiasGrid,
    sources: Vec<SourceNode>,
    /// Each entry indexes `sources`; member dimensions are pairwise distinct.
    interactions: Vec<Vec<usize>>,
    output_dim: usize,
    /// `(n_nodes, output_dim)` row-major.
    weights: Tensor,
    intercept: Tensor,
}

#[derive(Serialize, Deserialize)]
struct EhhRepr {
    input_dim: usize,
    bias_lists: BiasGrid,
    sources: Vec<SourceNode>,
    interactions: Vec<Vec<usize>>,
    output_dim: usize,
    alpha: Tensor,
    alpha0: Tensor,
}

impl TryFrom<EhhRepr> for EhhNetwork {
    type Error = Error;

    fn try_from(r: EhhRepr) -> Result<Self> {
        let net = EhhNetwork {
            input_dim: r.input_dim,
            grid: r.bias_lists,
            sources: r.sources,
            interactions: r.interactions,
            output_dim: r.output_dim,
            weights: r.alpha,
            intercept: r.alpha0,
        };
        net.validate()?;
        Ok(net)
    }
}

impl From<EhhNetwork> for EhhRepr {
    fn from(n: EhhNetwork) -> Self {
        EhhRepr {
            input_dim: n.input_dim,
            bias_lists: n.grid,
            sources: n.sources,
            interactions: n.interactions,
            output_dim: n.output_dim,
            alpha: n.weights,
            alpha0: n.intercept,
        }
    }
}

impl EhhNetwork {
    /// Emits one source node per `(dim, level)` and up to `candidate_cap`
    /// interaction nodes per order, sampled uniformly from cross-dimension
    /// candidate sets. All weights start at zero.
    pub fn generate<R: Rng + ?Sized>(
        grid: BiasGrid,
        output_dim: usize,
        config: &EhhConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if let Some(cap) = config.candidate_cap {
            if cap < 0 {
                return Err(Error::config(format!("candidate cap must be >= 0, got {cap}")));
            }
        }
        if config.max_order == 0 {
            return Err(Error::config("max_order must be >= 1"));
        }
        if output_dim == 0 {
            return Err(Error::config("output_dim must be >= 1"));
        }
        let input_dim = grid.dims();
        let mut sources = Vec::with_capacity(grid.width());
        let mut first_of_dim = Vec::with_capacity(input_dim);
        for (dim, row) in grid.rows().iter().enumerate() {
            first_of_dim.push(sources.len());
            for (level, &bias) in row.iter().enumerate() {
                sources.push(SourceNode { dim, level, bias });
            }
        }

        let mut interactions = Vec::new();
        for order in 2..=config.max_order.min(input_dim) {
            let candidates = enumerate_candidates(&grid, &first_of_dim, order);
            let chosen = match config.candidate_cap {
                Some(cap) if (cap as usize) < candidates.len() => {
                    let mut picked = index::sample(rng, candidates.len(), cap as usize).into_vec();
                    picked.sort_unstable();
                    picked.into_iter().map(|i| candidates[i].clone()).collect()
                }
                _ => candidates,
            };
            interactions.extend(chosen);
        }

        let n_nodes = sources.len() + interactions.len();
        Ok(Self {
            input_dim,
            grid,
            sources,
            interactions,
            output_dim,
            weights: Tensor::zeros(&[n_nodes, output_dim])?,
            intercept: Tensor::zeros(&[output_dim])?,
        })
    }

    /// Assembles a network from explicit parts; used by tests and checkpoints.
    pub fn from_parts(
        grid: BiasGrid,
        interactions: Vec<Vec<usize>>,
        weights: Vec<f64>,
        intercept: Vec<f64>,
    ) -> Result<Self> {
        let sources: Vec<SourceNode> = grid
            .rows()
            .iter()
            .enumerate()
            .flat_map(|(dim, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(level, &bias)| SourceNode { dim, level, bias })
            })
            .collect();
        let output_dim = intercept.len();
        let n_nodes = sources.len() + interactions.len();
        let net = Self {
            input_dim: grid.dims(),
            grid,
            sources,
            interactions,
            output_dim,
            weights: Tensor::from_vec(vec![n_nodes, output_dim.max(1)], weights)?,
            intercept: Tensor::from_vec(vec![output_dim.max(1)], intercept)?,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.grid.dims() != self.input_dim {
            return Err(Error::shape("bias lists do not match input dimension"));
        }
        for (s, src) in self.sources.iter().enumerate() {
            let ok = src.dim < self.input_dim
                && self.grid.dim(src.dim).get(src.level).copied() == Some(src.bias);
            if !ok {
                return Err(Error::shape(format!("source node {s} does not match the bias lists")));
            }
        }
        for (k, set) in self.interactions.iter().enumerate() {
            if set.len() < 2 {
                return Err(Error::shape(format!("interaction node {k} has fewer than two members")));
            }
            let mut dims = Vec::with_capacity(set.len());
            for &s in set {
                let src = self
                    .sources
                    .get(s)
                    .ok_or_else(|| Error::shape(format!("interaction node {k} references missing source {s}")))?;
                dims.push(src.dim);
            }
            dims.sort_unstable();
            if dims.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::shape(format!(
                    "interaction node {k} combines sources from the same input dimension"
                )));
            }
        }
        let n_nodes = self.node_count();
        if self.weights.shape() != [n_nodes, self.output_dim] || self.intercept.shape() != [self.output_dim] {
            return Err(Error::shape("weight shapes do not match node and output counts"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn grid(&self) -> &BiasGrid {
        &self.grid
    }

    pub fn sources(&self) -> &[SourceNode] {
        &self.sources
    }

    pub fn interactions(&self) -> &[Vec<usize>] {
        &self.interactions
    }

    pub fn node_count(&self) -> usize {
        self.sources.len() + self.interactions.len()
    }

    /// Sorted input dimensions that node `k` depends on.
    pub fn node_dims(&self, k: usize) -> Vec<usize> {
        if k < self.sources.len() {
            vec![self.sources[k].dim]
        } else {
            let mut dims: Vec<usize> = self.interactions[k - self.sources.len()]
                .iter()
                .map(|&s| self.sources[s].dim)
                .collect();
            dims.sort_unstable();
            dims
        }
    }

    /// `alpha[node][output]`.
    pub fn weights(&self) -> &[f64] {
        self.weights.values()
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.values_mut()
    }

    pub fn intercept(&self) -> &[f64] {
        self.intercept.values()
    }

    pub fn intercept_mut(&mut self) -> &mut [f64] {
        self.intercept.values_mut()
    }

    pub fn weight(&self, node: usize, output: usize) -> f64 {
        self.weights.values()[node * self.output_dim + output]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::shape(format!(
                "EHH network expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Hidden-node outputs `z(x)`, sources first.
    pub fn node_outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.node_outputs_unchecked(x))
    }

    fn node_outputs_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self.sources.iter().map(|s| s.eval(x)).collect();
        let n_src = z.len();
        for set in &self.interactions {
            let v = set.iter().map(|&s| z[s]).fold(f64::INFINITY, f64::min);
            z.push(v);
        }
        debug_assert_eq!(z.len(), n_src + self.interactions.len());
        z
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.node_outputs(x)?;
        Ok(self.combine(&z))
    }

    /// Output-layer combination of node values.
    pub fn combine(&self, z: &[f64]) -> Vec<f64> {
        let mut h = self.intercept.values().to_vec();
        let w = self.weights.values();
        for (k, zk) in z.iter().enumerate() {
            if *zk != 0.0 {
                for (o, ho) in h.iter_mut().enumerate() {
                    *ho += w[k * self.output_dim + o] * zk;
                }
            }
        }
        h
    }

    /// Output plus the region pattern: source activity and the arg-min of every interaction.
    pub fn forward_with_pattern(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
        self.check_input(x)?;
        let z = self.node_outputs_unchecked(x);
        let mut pattern: Vec<bool> = self.sources.iter().map(|s| x[s.dim] > s.bias).collect();
        for set in &self.interactions {
            let arg = argmin(set.iter().map(|&s| z[s]));
            pattern.extend((0..set.len()).map(|i| i == arg));
        }
        Ok((self.combine(&z), pattern))
    }

    /// Parameter gradients and input gradient for output gradient `dh` at `x`.
    ///
    /// Kinks take subgradient 0; ties inside a min take the first member.
    pub fn backward(&self, x: &[f64], dh: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        self.check_input(x)?;
        if dh.len() != self.output_dim {
            return Err(Error::shape(format!(
                "output gradient has {} entries, network has {} outputs",
                dh.len(),
                self.output_dim
            )));
        }
        let z = self.node_outputs_unchecked(x);
        let w = self.weights.values();
        let mut dw = vec![0.0; w.len()];
        // dL/dz_k
        let mut dz = vec![0.0; z.len()];
        for k in 0..z.len() {
            let mut acc = 0.0;
            for (o, g) in dh.iter().enumerate() {
                dw[k * self.output_dim + o] = g * z[k];
                acc += g * w[k * self.output_dim + o];
            }
            dz[k] = acc;
        }
        let n_src = self.sources.len();
        for (i, set) in self.interactions.iter().enumerate() {
            let arg = argmin(set.iter().map(|&s| z[s]));
            dz[set[arg]] += dz[n_src + i];
        }
        let mut dx = vec![0.0; self.input_dim];
        for (s, src) in self.sources.iter().enumerate() {
            if x[src.dim] > src.bias {
                dx[src.dim] += dz[s];
            }
        }
        Ok((Gradients(vec![dw, dh.to_vec()]), dx))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Parameterized for EhhNetwork {
    fn params(&self) -> Vec<(String, &Tensor)> {
        vec![("alpha".into(), &self.weights), ("alpha0".into(), &self.intercept)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![("alpha".into(), &mut self.weights), ("alpha0".into(), &mut self.intercept)]
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, v) in values.enumerate() {
        if v < best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// All source-index sets of size `order` whose members come from distinct dims.
fn enumerate_candidates(grid: &BiasGrid, first_of_dim: &[usize], order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let dims = grid.dims();
    let mut dim_combo = Vec::with_capacity(order);
    fn dims_rec(
        start: usize,
        dims: usize,
        order: usize,
        combo: &mut Vec<usize>,
        emit: &mut dyn FnMut(&[usize]),
    ) {
        if combo.len() == order {
            emit(combo);
            return;
        }
        for d in start..dims {
            combo.push(d);
            dims_rec(d + 1, dims, order, combo, emit);
            combo.pop();
        }
    }
    dims_rec(0, dims, order, &mut dim_combo, &mut |combo| {
        // Cartesian product over levels of the chosen dims.
        let sizes: Vec<usize> = combo.iter().map(|&d| grid.dim(d).len()).collect();
        let mut levels = vec![0usize; order];
        loop {
            out.push(
                combo
                    .iter()
                    .zip(&levels)
                    .map(|(&d, &l)| first_of_dim[d] + l)
                    .collect(),
            );
            let mut i = order;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                levels[i] += 1;
                if levels[i] < sizes[i] {
                    break;
                }
                levels[i] = 0;
            }
        }
    });
    out
}
