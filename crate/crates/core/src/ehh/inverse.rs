//! Mapping EHH-input importances back through a linear input transform.

use nalgebra::{DMatrix, DVector};

use crate::{linalg, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct InverseImportance {
    /// Importance per pre-transform input component.
    pub sigma_in: Vec<f64>,
    /// How many negative entries were clamped to zero.
    pub clamped: usize,
}

/// Solves `W sigma_in = sigma_m` for `x_tilde = W x`, with `W` of shape `(rows, cols)` row-major.
///
/// Square `W` uses the exact inverse; otherwise the Moore–Penrose pseudo-inverse.
/// A transform without full rank is rejected, naming the dependent columns
/// (or rows, for a wide matrix). Negative results are clamped to zero.
pub fn importance_inverse(w: &[f64], rows: usize, cols: usize, sigma_m: &[f64]) -> Result<InverseImportance> {
    if w.len() != rows * cols {
        return Err(Error::shape(format!("{} values for a {rows}x{cols} transform", w.len())));
    }
    if sigma_m.len() != rows {
        return Err(Error::shape(format!(
            "transform has {rows} outputs but {} importances were given",
            sigma_m.len()
        )));
    }
    let m = linalg::from_row_major(rows, cols, w);
    let full = rows.min(cols);
    if linalg::rank(&m) < full {
        return Err(if rows >= cols {
            Error::Singular { axis: "column", indices: linalg::dependent_columns(&m) }
        } else {
            Error::Singular { axis: "row", indices: linalg::dependent_columns(&m.transpose()) }
        });
    }
    let inv: DMatrix<f64> = if rows == cols {
        m.clone()
            .try_inverse()
            .ok_or(Error::Singular { axis: "column", indices: linalg::dependent_columns(&m) })?
    } else {
        linalg::pinv(&m)
    };
    let raw = inv * DVector::from_column_slice(sigma_m);
    let mut clamped = 0;
    let sigma_in = raw
        .iter()
        .map(|&v| {
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    if clamped > 0 {
        log::debug!("clamped {clamped} negative input importances to zero");
    }
    Ok(InverseImportance { sigma_in, clamped })
}
