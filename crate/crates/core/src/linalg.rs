//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of a symmetric matrix, eigenvalues in decreasing order.
pub(crate) struct SortedEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> SortedEigen {
    let n = m.nrows();
    // symmetrize first so round-off asymmetry cannot leak into the solver
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SortedEigen { values, vectors }
}

pub(crate) fn check_symmetric(m: &DMatrix<f64>, rel_tol: f64, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::validation(format!(
            "{what} must be square, got {}×{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(v) = m.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!(
            "{what} has non-finite entry {v}"
        )));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            if (m[(r, c)] - m[(c, r)]).abs() > rel_tol * scale {
                return Err(Error::validation(format!(
                    "{what} is not symmetric at ({r}, {c}): {} vs {}",
                    m[(r, c)],
                    m[(c, r)]
                )));
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue must not fall below `-rel_tol` times the largest.
pub(crate) fn check_psd(eig: &SortedEigen, rel_tol: f64, what: &str) -> Result<()> {
    let (Some(&top), Some(&bottom)) = (eig.values.first(), eig.values.last()) else {
        return Ok(());
    };
    if bottom < -rel_tol * top.max(0.0) {
        return Err(Error::validation(format!(
            "{what} is not positive semidefinite (eigenvalues {top:e} .. {bottom:e})"
        )));
    }
    Ok(())
}

/// Symmetric square root of a PSD matrix; negative eigenvalues are clamped to zero.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sorted_eigen(m);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda > 0.0 {
            let e = eig.vectors.column(k);
            out += (e * e.transpose()) * lambda.sqrt();
        }
    }
    out
}
