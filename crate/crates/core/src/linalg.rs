//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Row-major slice to matrix.
pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, values)
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
    out
}

fn cutoff(sv: &nalgebra::DVector<f64>) -> f64 {
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (max * RANK_TOL).max(f64::MIN_POSITIVE)
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let tol = cutoff(&sv);
    sv.iter().filter(|s| **s > tol).count()
}

/// Indices of columns that are (numerically) linear combinations of earlier columns.
pub fn dependent_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let scale = m.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-9 * scale;
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for c in 0..m.ncols() {
        let mut v = m.column(c).into_owned();
        for b in &basis {
            let proj = b.dot(&v);
            v -= b * proj;
        }
        let norm = v.norm();
        if norm <= tol {
            dependent.push(c);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Moore–Penrose pseudo-inverse via SVD.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let tol = cutoff(&svd.singular_values);
    svd.pseudo_inverse(tol).expect("u and v were computed")
}

/// Minimum-norm least-squares solution of `a x = b` (columns of `b` solved jointly).
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!(
            "least squares with {} equations but {} right-hand rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let svd = a.clone().svd(true, true);
    let tol = cutoff(&svd.singular_values);
    svd.solve(b, tol).map_err(|e| Error::Numeric { param: e.to_string() })
}

/// Eigen-decomposition of a symmetric matrix, eigenpairs sorted by descending eigenvalue.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_square_is_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&m);
        let id = &m * &p;
        assert!((id - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn finds_dependent_column() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        assert_eq!(dependent_columns(&m), vec![1]);
        assert_eq!(rank(&m), 2);
    }

    #[test]
    fn lstsq_exact_system() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = DMatrix::from_row_slice(2, 1, &[2.0, -1.0]);
        let b = &a * &x;
        let sol = lstsq(&a, &b).unwrap();
        assert!((sol - x).abs().max() < 1e-12);
    }
}
