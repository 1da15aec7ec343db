#![allow(dead_code)]

use std::sync::Arc;

use influence_core::models::{
    fit_model, Cluster, ClusteredDataset, CovarianceStructure, Family, FitOptions, ModelFit, ModelKind,
};
use influence_core::rng::stream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// The fixed 10×3 regression fixture: intercept plus two covariates.
pub fn regression_data() -> ClusteredDataset {
    let z = normals(1010, 30);
    let x = DMatrix::from_fn(10, 3, |i, k| if k == 0 { 1.0 } else { z[10 * k + i] });
    let beta = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let noise = DVector::from_fn(10, |i, _| 0.7 * z[i]);
    let y = &x * beta + noise;
    ClusteredDataset::from_rows(y, x).unwrap()
}

pub fn regression_fit() -> ModelFit {
    fit_model(Arc::new(regression_data()), ModelKind::LinearRegression, Family::Gaussian, None, FitOptions::default())
        .unwrap()
}

/// `n` observations with an intercept-only design.
pub fn iid_data(y: Vec<f64>) -> ClusteredDataset {
    let n = y.len();
    ClusteredDataset::from_rows(DVector::from_vec(y), DMatrix::from_element(n, 1, 1.0)).unwrap()
}

pub fn known_fit(kind: ModelKind, family: Family, y: Vec<f64>, theta: Vec<f64>) -> ModelFit {
    ModelFit::with_known_theta(kind, family, Arc::new(iid_data(y)), DVector::from_vec(theta), None).unwrap()
}

/// Clusters of the given sizes with design `(1, d)` and errors drawn from
/// the structure at `xi`.
pub fn clustered_data(sizes: &[usize], structure: CovarianceStructure, xi: &[f64], seed: u64) -> ClusteredDataset {
    let mut rng = stream(seed, 0);
    let xi = DVector::from_column_slice(xi);
    let clusters = sizes
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            d.sort_by(f64::total_cmp);
            let d = DVector::from_vec(d);
            let x = DMatrix::from_fn(m, 2, |j, k| if k == 0 { 1.0 } else { d[j] });
            let block = structure.build(&xi, m, Some(&d)).unwrap();
            let l = block.sigma.cholesky().unwrap().l();
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let y = &x * DVector::from_vec(vec![0.5, 1.0]) + l * z;
            Cluster::new((i + 1).to_string(), y, x).with_d(d)
        })
        .collect();
    ClusteredDataset::new(clusters).unwrap()
}

pub fn lmm_fit(sizes: &[usize], structure: CovarianceStructure, xi: &[f64], seed: u64) -> ModelFit {
    let data = clustered_data(sizes, structure, xi, seed);
    fit_model(Arc::new(data), ModelKind::LinearMixed, Family::Gaussian, Some(structure), FitOptions::default()).unwrap()
}

/// `P_X = X(XᵀX)⁻¹Xᵀ` and the residuals of a regression fit.
pub fn hat_and_residuals(fit: &ModelFit) -> (DMatrix<f64>, DVector<f64>) {
    let x = fit.data.stacked_x();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let p = &x * inv * x.transpose();
    let r = fit.data.stacked_y() - &x * fit.beta();
    (p, r)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(1e-300)
}

/// Central differences of a vector-valued map in each coordinate.
pub fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, at: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = (0..at.len())
        .map(|j| {
            let mut a = at.clone();
            let mut b = at.clone();
            a[j] += h;
            b[j] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect();
    DMatrix::from_columns(&cols)
}

/// Three compound-symmetry clusters of sizes 4, 5 and 10. With so few
/// clusters the ML estimate of ρ often sits on the boundary −1/(m−1); this
/// draw has an interior maximum.
pub fn lmm3() -> ModelFit {
    lmm_fit(&[4, 5, 10], CovarianceStructure::CompoundSymmetry, &[1.0, 0.6], 2)
}

/// The per-entry bound equivalent to one 3σ check over `k` entries.
pub fn sidak_z(k: usize) -> f64 {
    influence_core::oracle::sidak_z(k, 3.0)
}
