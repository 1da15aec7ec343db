use nalgebra::{DMatrix, DVector};

use super::fix_sign;
use crate::error::{InfluenceError, Result};
use crate::linalg::{sym_eigen, sym_inv_sqrt, symmetrize};

#[derive(Debug, Clone, PartialEq)]
pub struct EigenInfluence {
    /// Generalized eigenvalues, ordered by decreasing magnitude.
    pub eigenvalues: DVector<f64>,
    /// `λ_i / √Σλ_j²`; `None` when every eigenvalue is zero.
    pub normalized: Option<DVector<f64>>,
    /// G-orthonormal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
}

/// Solves `H̃u = λGu` by whitening with `G^{-1/2}`.
///
/// Ties in `|λ|` are ordered by the position of each eigenvector's
/// largest-magnitude entry, and each eigenvector is signed so that entry is
/// positive.
pub fn eigen_influence(htilde: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<EigenInfluence> {
    let p = g.nrows();
    if htilde.nrows() != p || htilde.ncols() != p || g.ncols() != p {
        return Err(InfluenceError::DimensionMismatch { expected: p, got: htilde.nrows() });
    }
    let w = sym_inv_sqrt(g, 1e-12)?;
    let a = symmetrize(&(&w * htilde * &w));
    let (values, vectors) = sym_eigen(&a);
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut pairs: Vec<(f64, DVector<f64>, usize)> = (0..p)
        .map(|i| {
            let u = fix_sign(&w * vectors.column(i));
            let lead = (0..p).fold(0, |b, k| if u[k].abs() > u[b].abs() { k } else { b });
            // Exact zeros in λ keep their sign convention stable.
            let lam = if values[i].abs() <= 1e-15 * scale { 0.0 } else { values[i] };
            (lam, u, lead)
        })
        .collect();
    let tie = 1e-12 * scale.max(f64::MIN_POSITIVE);
    pairs.sort_by(|x, y| {
        let (ax, ay) = (x.0.abs(), y.0.abs());
        if (ax - ay).abs() <= tie {
            x.2.cmp(&y.2)
        } else {
            ay.total_cmp(&ax)
        }
    });
    let eigenvalues = DVector::from_iterator(p, pairs.iter().map(|x| x.0));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (c, (_, u, _)) in pairs.iter().enumerate() {
        eigenvectors.set_column(c, u);
    }
    let norm = eigenvalues.norm();
    let normalized = (norm > 0.0).then(|| &eigenvalues / norm);
    Ok(EigenInfluence { eigenvalues, normalized, eigenvectors })
}
