use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Offsets of the default five-level BReLU grid, in units of the input spread.
///
/// The fourth and fifth entries are intentionally not mirror images.
pub const DEFAULT_OFFSETS: [f64; 5] = [-3.0, -0.824, -0.248, 0.248, 0.834];

/// Builds one dimension's bias list `offsets * nu + eta`.
///
/// `nu` is the spread and `eta` the centre of the normalized input.
pub fn brelu_bias_grid(nu: f64, eta: f64) -> Result<Vec<f64>> {
    scaled_offsets(&DEFAULT_OFFSETS, nu, eta)
}

fn scaled_offsets(offsets: &[f64], nu: f64, eta: f64) -> Result<Vec<f64>> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Degenerate(format!("spread must be positive, got {nu}")));
    }
    if !eta.is_finite() {
        return Err(Error::Degenerate(format!("centre must be finite, got {eta}")));
    }
    Ok(offsets.iter().map(|o| o * nu + eta).collect())
}

/// Per-input-dimension sorted bias lists for a BReLU activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct BiasGrid {
    biases: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for BiasGrid {
    type Error = Error;

    fn try_from(biases: Vec<Vec<f64>>) -> Result<Self> {
        BiasGrid::new(biases)
    }
}

impl From<BiasGrid> for Vec<Vec<f64>> {
    fn from(g: BiasGrid) -> Self {
        g.biases
    }
}

impl BiasGrid {
    /// Validates that every dimension has at least one strictly increasing bias.
    pub fn new(biases: Vec<Vec<f64>>) -> Result<Self> {
        if biases.is_empty() {
            return Err(Error::shape("bias grid needs at least one dimension"));
        }
        for (i, dim) in biases.iter().enumerate() {
            if dim.is_empty() {
                return Err(Error::shape(format!("bias grid dimension {i} is empty")));
            }
            if dim.iter().any(|b| !b.is_finite()) {
                return Err(Error::config(format!("bias grid dimension {i} has non-finite entries")));
            }
            if dim.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!(
                    "bias grid dimension {i} is not strictly increasing: {dim:?}"
                )));
            }
        }
        Ok(Self { biases })
    }

    /// The default grid with the same `(nu, eta)` for all `dims` dimensions.
    pub fn standard(dims: usize, nu: f64, eta: f64) -> Result<Self> {
        let row = brelu_bias_grid(nu, eta)?;
        Self::new(vec![row; dims])
    }

    /// Default grid with per-dimension `(nu, eta)` statistics.
    pub fn from_stats(stats: &[(f64, f64)]) -> Result<Self> {
        Self::from_offsets(&DEFAULT_OFFSETS, stats)
    }

    /// A grid with a caller-chosen number of levels per dimension.
    pub fn from_offsets(offsets: &[f64], stats: &[(f64, f64)]) -> Result<Self> {
        let rows = stats
            .iter()
            .map(|&(nu, eta)| scaled_offsets(offsets, nu, eta))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    /// A single bias of `value` in every dimension; with zero this is plain ReLU.
    pub fn single(dims: usize, value: f64) -> Result<Self> {
        Self::new(vec![vec![value]; dims])
    }

    pub fn dims(&self) -> usize {
        self.biases.len()
    }

    /// Total output width `sum_i q_i`.
    pub fn width(&self) -> usize {
        self.biases.iter().map(Vec::len).sum()
    }

    pub fn dim(&self, i: usize) -> &[f64] {
        &self.biases[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.biases
    }
}

/// BReLU: entry `(i, q)` is `max(0, x_i - beta_{i,q})`, dimension-major, bias-ascending.
pub fn brelu_forward(x: &[f64], grid: &BiasGrid) -> Result<Vec<f64>> {
    if x.len() != grid.dims() {
        return Err(Error::shape(format!(
            "input has {} dims but grid covers {}",
            x.len(),
            grid.dims()
        )));
    }
    let mut out = Vec::with_capacity(grid.width());
    for (xi, row) in x.iter().zip(grid.rows()) {
        out.extend(row.iter().map(|b| (xi - b).max(0.0)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: &[f64], b: &[f64]) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn printed_grid_unit() {
        assert_eq!(
            brelu_bias_grid(1.0, 0.0).unwrap(),
            vec![-3.0, -0.824, -0.248, 0.248, 0.834]
        );
    }

    #[test]
    fn printed_grid_scaled() {
        assert_close(
            &brelu_bias_grid(2.0, 1.0).unwrap(),
            &[-5.0, -0.648, 0.504, 1.496, 2.668],
        );
    }

    #[test]
    fn zero_spread_is_degenerate() {
        assert!(matches!(brelu_bias_grid(0.0, 0.0), Err(Error::Degenerate(_))));
        assert!(matches!(brelu_bias_grid(-1.0, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn forward_substitution() {
        let grid = BiasGrid::standard(1, 1.0, 0.0).unwrap();
        let y = brelu_forward(&[0.5], &grid).unwrap();
        assert_close(&y, &[3.5, 1.324, 0.748, 0.252, 0.0]);
    }

    #[test]
    fn kink_gives_zero() {
        let grid = BiasGrid::standard(2, 1.0, 0.0).unwrap();
        let y = brelu_forward(&[-0.248, 0.834], &grid).unwrap();
        assert_eq!(y[2], 0.0);
        assert_eq!(y[9], 0.0);
    }

    #[test]
    fn single_zero_bias_is_relu() {
        let grid = BiasGrid::single(3, 0.0).unwrap();
        let y = brelu_forward(&[-1.0, 0.0, 2.5], &grid).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 2.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let grid = BiasGrid::standard(2, 1.0, 0.0).unwrap();
        assert!(matches!(brelu_forward(&[1.0], &grid), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_must_increase() {
        assert!(BiasGrid::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(BiasGrid::new(vec![vec![]]).is_err());
        assert!(BiasGrid::new(vec![vec![-1.0, 2.0]]).is_ok());
    }

    #[test]
    fn custom_level_count() {
        let g = BiasGrid::from_offsets(&[-1.0, 0.0, 1.0], &[(1.0, 0.0), (2.0, 1.0)]).unwrap();
        assert_eq!(g.width(), 6);
        assert_eq!(g.dim(1), &[-1.0, 1.0, 3.0]);
    }
}
