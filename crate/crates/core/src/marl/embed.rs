//! Node embedding: a shared one-layer ReLU MLP over incoming-edge features,
//! averaged per intersection.
//!
//! An edge feature is `[stage one-hot, scaled q * serve mask, scaled density * serve mask]`
//! where the serve mask marks which of the four stages give the edge green.
//! Without the mask, averaging over edges would lose which approach is queued.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pwlnet::{EvalContext, Gradients, Init, LayerSpec, Mlp, Parameterized};
use crate::trafficsim::{TrafficGraph, NUM_STAGES};
use crate::{Error, Result};

/// Queue counts are multiplied by this before entering the embedding.
pub const QUEUE_SCALE: f64 = 1.0;

/// Densities are multiplied by this before entering the embedding.
pub const DENSITY_SCALE: f64 = 10.0;

pub const EDGE_FEATURES: usize = 3 * NUM_STAGES;

/// Where each agent's incoming edges sit in its observation, and which stages serve them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsLayout {
    pub pad: usize,
    /// Per agent, per incoming edge: serve mask over stages.
    pub masks: Vec<Vec<[bool; NUM_STAGES]>>,
}

impl ObsLayout {
    pub fn from_graph(graph: &TrafficGraph) -> Self {
        let masks = (0..graph.num_intersections())
            .map(|i| {
                graph
                    .incoming(i)
                    .iter()
                    .map(|j| std::array::from_fn(|s| graph.program(i)[s].contains(j)))
                    .collect()
            })
            .collect();
        Self { pad: graph.max_in_degree(), masks }
    }

    pub fn agents(&self) -> usize {
        self.masks.len()
    }

    pub fn obs_width(&self) -> usize {
        NUM_STAGES + 2 * self.pad
    }

    /// Features of every incoming edge of agent `i`.
    pub fn edge_features(&self, i: usize, obs: &[f64]) -> Vec<[f64; EDGE_FEATURES]> {
        self.masks[i]
            .iter()
            .enumerate()
            .map(|(slot, mask)| {
                let q = obs[NUM_STAGES + slot] * QUEUE_SCALE;
                let phi = obs[NUM_STAGES + self.pad + slot] * DENSITY_SCALE;
                let mut f = [0.0; EDGE_FEATURES];
                f[..NUM_STAGES].copy_from_slice(&obs[..NUM_STAGES]);
                for s in 0..NUM_STAGES {
                    if mask[s] {
                        f[NUM_STAGES + s] = q;
                        f[2 * NUM_STAGES + s] = phi;
                    }
                }
                f
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbedder {
    pub layout: ObsLayout,
    pub mlp: Mlp,
}

/// Recorded per-edge passes for one multi-agent observation.
#[derive(Debug, Clone, Default)]
pub struct EmbedPass {
    contexts: Vec<Vec<EvalContext>>,
}

impl NodeEmbedder {
    pub fn new<R: Rng + ?Sized>(layout: ObsLayout, width: usize, rng: &mut R) -> Result<Self> {
        let mlp = Mlp::build(EDGE_FEATURES, &[LayerSpec::Relu(width)], Init::He, Init::He, rng)?;
        Ok(Self { layout, mlp })
    }

    pub fn width(&self) -> usize {
        self.mlp.output_dim()
    }

    fn check(&self, obs: &[Vec<f64>]) -> Result<()> {
        if obs.len() != self.layout.agents() {
            return Err(Error::shape(format!("{} observations for {} agents", obs.len(), self.layout.agents())));
        }
        if let Some(o) = obs.iter().find(|o| o.len() != self.layout.obs_width()) {
            return Err(Error::shape(format!("observation width {} != {}", o.len(), self.layout.obs_width())));
        }
        Ok(())
    }

    /// `v_in` for every agent.
    pub fn embed(&self, obs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check(obs)?;
        (0..obs.len())
            .map(|i| {
                let feats = self.layout.edge_features(i, &obs[i]);
                let mut acc = vec![0.0; self.width()];
                for f in &feats {
                    for (a, v) in acc.iter_mut().zip(self.mlp.forward(f)?) {
                        *a += v;
                    }
                }
                let n = feats.len() as f64;
                acc.iter_mut().for_each(|a| *a /= n);
                Ok(acc)
            })
            .collect()
    }

    /// Like [`embed`](Self::embed) but records what [`backward`](Self::backward) needs.
    pub fn embed_recorded(&self, obs: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, EmbedPass)> {
        self.check(obs)?;
        let mut pass = EmbedPass::default();
        let mut out = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            let feats = self.layout.edge_features(i, o);
            let mut ctxs = Vec::with_capacity(feats.len());
            let mut acc = vec![0.0; self.width()];
            for f in &feats {
                let mut ctx = EvalContext::new();
                for (a, v) in acc.iter_mut().zip(ctx.forward(&self.mlp, f)?) {
                    *a += v;
                }
                ctxs.push(ctx);
            }
            let n = feats.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
            out.push(acc);
            pass.contexts.push(ctxs);
        }
        Ok((out, pass))
    }

    /// Accumulates parameter gradients for output gradients `dv[i]` into `grads`.
    pub fn backward(&self, pass: &EmbedPass, dv: &[Vec<f64>], grads: &mut Gradients) -> Result<()> {
        for (ctxs, d) in pass.contexts.iter().zip(dv) {
            if d.iter().all(|x| *x == 0.0) {
                continue;
            }
            let scaled: Vec<f64> = d.iter().map(|x| x / ctxs.len() as f64).collect();
            for ctx in ctxs {
                grads.add_assign(&ctx.backward(&self.mlp, &scaled)?.grads);
            }
        }
        Ok(())
    }
}

impl Parameterized for NodeEmbedder {
    fn params(&self) -> Vec<(String, &crate::pwlnet::Tensor)> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut crate::pwlnet::Tensor)> {
        self.mlp.params_mut()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trafficsim::load_network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn embedder(name: &str) -> NodeEmbedder {
        let g = load_network(name).unwrap();
        NodeEmbedder::new(ObsLayout::from_graph(&g), 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn zero_inputs_zero_bias_give_zero() {
        let mut e = embedder("grid2x2");
        for (_, t) in e.mlp.params_mut() {
            if t.shape().len() == 1 {
                t.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let obs = vec![vec![0.0; e.layout.obs_width()]; 4];
        assert!(e.embed(&obs).unwrap().iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn single_edge_is_mlp_output() {
        let layout = ObsLayout { pad: 1, masks: vec![vec![[true, false, true, false]]] };
        let e = NodeEmbedder::new(layout, 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let obs = vec![vec![0.0, 1.0, 0.0, 0.0, 5.0, 0.25]];
        let f = e.layout.edge_features(0, &obs[0]);
        let (q, phi) = (5.0 * QUEUE_SCALE, 0.25 * DENSITY_SCALE);
        assert_eq!(f[0], [0.0, 1.0, 0.0, 0.0, q, 0.0, q, 0.0, phi, 0.0, phi, 0.0]);
        assert_eq!(e.embed(&obs).unwrap()[0], e.mlp.forward(&f[0]).unwrap());
    }

    #[test]
    fn edge_order_does_not_matter() {
        let masks = vec![vec![[true, false, false, false], [false, true, false, false], [false, false, true, true]]];
        let e = NodeEmbedder::new(ObsLayout { pad: 3, masks }, 8, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let obs = vec![vec![1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 5.0, 0.2, 0.0, 0.5]];
        let mut swapped = e.clone();
        swapped.layout.masks[0].swap(0, 2);
        let obs_swapped = vec![vec![1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 3.0, 0.5, 0.0, 0.2]];
        let a = e.embed(&obs).unwrap();
        let b = swapped.embed(&obs_swapped).unwrap();
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut e = embedder("non_euclidean4");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let obs: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut o = vec![0.0; e.layout.obs_width()];
                o[rng.random_range(0..4)] = 1.0;
                for v in &mut o[4..] {
                    *v = rng.random_range(0.0..3.0);
                }
                o
            })
            .collect();
        let dv: Vec<Vec<f64>> = (0..4).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let loss = |e: &NodeEmbedder| -> f64 {
            e.embed(&obs).unwrap().iter().zip(&dv).map(|(v, d)| v.iter().zip(d).map(|(a, b)| a * b).sum::<f64>()).sum()
        };
        let (_, pass) = e.embed_recorded(&obs).unwrap();
        let mut grads = Gradients::zeros_like(&e);
        e.backward(&pass, &dv, &mut grads).unwrap();
        let h = 1e-6;
        for (block, idx) in [(0usize, 5usize), (0, 100), (1, 3)] {
            let orig = e.mlp.params()[block].1.values()[idx];
            e.mlp.params_mut()[block].1.values_mut()[idx] = orig + h;
            let up = loss(&e);
            e.mlp.params_mut()[block].1.values_mut()[idx] = orig - h;
            let down = loss(&e);
            e.mlp.params_mut()[block].1.values_mut()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grads.0[block][idx]).abs() < 1e-6, "{fd} vs {}", grads.0[block][idx]);
        }
    }
}
