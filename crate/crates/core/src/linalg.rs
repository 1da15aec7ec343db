//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{InfluenceError, Result};

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues in ascending order.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(a);
    let mapped = DMatrix::from_diagonal(&values.map(f));
    symmetrize(&(&vectors * mapped * vectors.transpose()))
}

/// Relative floor for positive definiteness: smallest eigenvalue must exceed
/// `rel_floor * trace / n`.
fn check_pd(values: &DVector<f64>, rel_floor: f64, what: &str) -> Result<()> {
    let n = values.len().max(1) as f64;
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let min = values.min();
    if !(min > rel_floor * scale) || scale == 0.0 {
        return Err(InfluenceError::SingularMetric(format!(
            "{what}: smallest eigenvalue {min:.3e} against mean eigenvalue {scale:.3e}"
        )));
    }
    Ok(())
}

/// Symmetric (spectral) square root of a positive semi-definite matrix.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(a, |v| v.max(0.0).sqrt())
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn sym_inv_sqrt(a: &DMatrix<f64>, rel_floor: f64) -> Result<DMatrix<f64>> {
    let (values, _) = sym_eigen(a);
    check_pd(&values, rel_floor, "inverse square root")?;
    Ok(spectral_map(a, |v| 1.0 / v.sqrt()))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(a)).map(|c| symmetrize(&c.inverse()))
}

/// Inverse of a symmetric positive definite matrix with a relative eigenvalue floor.
pub fn sym_pd_inverse(a: &DMatrix<f64>, rel_floor: f64) -> Result<DMatrix<f64>> {
    let (values, _) = sym_eigen(a);
    check_pd(&values, rel_floor, "inverse")?;
    Ok(spectral_map(a, |v| 1.0 / v))
}

/// Spectral condition number of a symmetric matrix (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen(a);
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Numerical rank of a symmetric matrix.
pub fn sym_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let (values, _) = sym_eigen(a);
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    values.iter().filter(|v| v.abs() > rel_tol * max).count()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Frobenius norm `sqrt(tr(A^T A))`, which is `sqrt(tr(A^2))` for symmetric A.
pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
