use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::chart::AffineChart;
use super::model::PerturbedModel;
use super::GeometryAtPoint;
use crate::error::{InfluenceError, Result};
use crate::linalg::{sym_eigen, sym_inv_sqrt, sym_rank};

pub const DEFAULT_PD_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_ISO_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AppropriatenessVerdict {
    pub is_appropriate: bool,
    /// `trace(G) / p`.
    pub c_hat: f64,
    /// `r_ij = g_ij / √(g_ii g_jj)`.
    pub correlation: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_offdiag_abs_corr: f64,
    /// Largest `|G_ij − ĉ δ_ij|` over all entries, relative to `ĉ`.
    pub max_iso_deviation: f64,
    pub rank: usize,
    pub singular: bool,
}

/// Checks `G(ω⁰) = c I` with `c > 0`.
///
/// Positive definiteness means `λ_min > pd_tolerance · ĉ`. Isotropy means every
/// entry, diagonal included, is within `iso_tolerance · ĉ` of `ĉ δ_ij`; a
/// diagonal metric with unequal entries is not isotropic.
pub fn appropriateness_report(geom: &GeometryAtPoint, pd_tolerance: f64, iso_tolerance: f64) -> AppropriatenessVerdict {
    let g = &geom.g;
    let p = g.nrows();
    let c_hat = if p == 0 { 0.0 } else { g.trace() / p as f64 };
    let (values, _) = sym_eigen(g);
    let min_eigenvalue = if p == 0 { 0.0 } else { values.min() };
    let correlation = DMatrix::from_fn(p, p, |i, j| {
        let (a, b) = (g[(i, i)], g[(j, j)]);
        if i == j {
            if a > 0.0 {
                1.0
            } else {
                0.0
            }
        } else if a > 0.0 && b > 0.0 {
            g[(i, j)] / (a * b).sqrt()
        } else {
            0.0
        }
    });
    let max_offdiag_abs_corr = (0..p)
        .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| correlation[(i, j)].abs())
        .fold(0.0, f64::max);
    let max_dev = (0..p)
        .flat_map(|i| (0..p).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - if i == j { c_hat } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    let max_iso_deviation = if c_hat > 0.0 { max_dev / c_hat } else { f64::INFINITY };
    let rank = sym_rank(g, 1e-10);
    let positive = c_hat > 0.0 && min_eigenvalue > pd_tolerance * c_hat;
    AppropriatenessVerdict {
        is_appropriate: p > 0 && positive && max_dev <= iso_tolerance * c_hat,
        c_hat,
        correlation,
        min_eigenvalue,
        max_offdiag_abs_corr,
        max_iso_deviation,
        rank,
        singular: !positive,
    }
}

pub fn appropriateness_report_default(geom: &GeometryAtPoint) -> AppropriatenessVerdict {
    appropriateness_report(geom, DEFAULT_PD_TOLERANCE, DEFAULT_ISO_TOLERANCE)
}

/// New coordinates `ω̃ = ω⁰ + c^{-1/2} G(ω⁰)^{1/2} (ω − ω⁰)` with the
/// symmetric square root, so that `G(ω̃⁰) = c I`.
pub fn rescale_perturbation(
    model: &PerturbedModel,
    geom_at_omega0: &GeometryAtPoint,
    c: f64,
) -> Result<PerturbedModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(InfluenceError::InvalidParameter(format!("rescaling constant must be positive, got {c}")));
    }
    let null = model.null_point();
    if geom_at_omega0.dim() != model.dim() {
        return Err(InfluenceError::DimensionMismatch { expected: model.dim(), got: geom_at_omega0.dim() });
    }
    if (&geom_at_omega0.omega - &null).amax() > 1e-12 * (1.0 + null.amax()) {
        return Err(InfluenceError::InvalidParameter("rescaling needs the geometry at the null point".into()));
    }
    let g = &geom_at_omega0.g;
    let p = g.nrows();
    let is_diagonal = (0..p).all(|i| (0..p).all(|j| i == j || g[(i, j)] == 0.0));
    let psi = if is_diagonal {
        if let Some(i) = (0..p).find(|&i| !(g[(i, i)] > 0.0)) {
            return Err(InfluenceError::SingularMetric(format!("g_{i}{i} = {} is not positive", g[(i, i)])));
        }
        let trace_mean = g.trace() / p as f64;
        if let Some(i) = (0..p).find(|&i| g[(i, i)] <= DEFAULT_PD_TOLERANCE * trace_mean) {
            return Err(InfluenceError::SingularMetric(format!("g_{i}{i} = {:.3e} is numerically zero", g[(i, i)])));
        }
        DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| (c / g[(i, i)]).sqrt()))
    } else {
        sym_inv_sqrt(g, DEFAULT_PD_TOLERANCE)? * c.sqrt()
    };
    model.with_chart(Arc::new(AffineChart::new(null, psi)?))
}
