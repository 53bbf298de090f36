//! Functional ANOVA decomposition of a trained EHH network.
//!
//! Every hidden node depends on a fixed set of input dimensions, so the
//! network output minus `alpha_0` splits exactly into one term per distinct
//! dimension set. A component's importance is the population standard
//! deviation of its term over a sample set. For multi-output networks the
//! per-output variances are summed before taking the root.

use std::collections::BTreeMap;
use std::io::Write;

use super::EhhNetwork;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaReport {
    /// `sigma_m` for each input dimension (main effects only).
    pub main: Vec<f64>,
    /// `sigma_{m,m'}` for every pair that owns at least one node, `m < m'`.
    pub pairs: Vec<((usize, usize), f64)>,
    /// Terms of order three and above, kept for completeness only.
    pub higher: Vec<(Vec<usize>, f64)>,
}

impl AnovaReport {
    /// Per-dimension importance with half of each pair importance credited to both members.
    pub fn combined(&self) -> Vec<f64> {
        let mut out = self.main.clone();
        for &((a, b), s) in &self.pairs {
            out[a] += 0.5 * s;
            out[b] += 0.5 * s;
        }
        out
    }

    /// CSV with columns `component,sigma`; components are `x{m}` or `x{m}:x{m'}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["component", "sigma"])?;
        for (m, s) in self.main.iter().enumerate() {
            w.write_record([format!("x{m}"), format!("{s}")])?;
        }
        for ((a, b), s) in &self.pairs {
            w.write_record([format!("x{a}:x{b}"), format!("{s}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contribution of every dimension set to the output at `x`, excluding `alpha_0`.
pub fn anova_terms(net: &EhhNetwork, x: &[f64]) -> Result<BTreeMap<Vec<usize>, Vec<f64>>> {
    let z = net.node_outputs(x)?;
    let n_out = net.output_dim();
    let mut terms: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for (k, zk) in z.iter().enumerate() {
        let entry = terms.entry(net.node_dims(k)).or_insert_with(|| vec![0.0; n_out]);
        for (o, e) in entry.iter_mut().enumerate() {
            *e += net.weight(k, o) * zk;
        }
    }
    Ok(terms)
}

/// Importance coefficients over `samples`.
pub fn anova_decompose(net: &EhhNetwork, samples: &[Vec<f64>]) -> Result<AnovaReport> {
    if samples.is_empty() {
        return Err(Error::data("ANOVA sample set is empty"));
    }
    let n = samples.len() as f64;
    let n_out = net.output_dim();
    let mut means: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    for x in samples {
        for (dims, vals) in anova_terms(net, x)? {
            let acc = means.entry(dims).or_insert_with(|| vec![0.0; n_out]);
            acc.iter_mut().zip(&vals).for_each(|(a, v)| *a += v / n);
        }
    }
    let mut var: BTreeMap<Vec<usize>, f64> = means.keys().map(|k| (k.clone(), 0.0)).collect();
    for x in samples {
        for (dims, vals) in anova_terms(net, x)? {
            let mu = &means[&dims];
            let acc = var.get_mut(&dims).expect("same key set");
            *acc += vals.iter().zip(mu).map(|(v, m)| (v - m).powi(2)).sum::<f64>();
        }
    }

    let mut report = AnovaReport {
        main: vec![0.0; net.input_dim()],
        pairs: Vec::new(),
        higher: Vec::new(),
    };
    for (dims, v) in var {
        let sigma = (v / n).sqrt();
        match dims.as_slice() {
            [m] => report.main[*m] = sigma,
            [a, b] => report.pairs.push(((*a, *b), sigma)),
            _ => report.higher.push((dims, sigma)),
        }
    }
    Ok(report)
}
