//! Objective probes: likelihood displacement, `−RSS` and the log-likelihood
//! ratio.

use nalgebra::{DMatrix, DVector};

use super::fit::{ModelFit, ModelKind};
use super::independent::VarianceParametrization;
use crate::error::{InfluenceError, Result};
use crate::geometry::PerturbedModel;
use crate::likelihood::{maximize, MaximizeOptions};
use crate::linalg::{spd_inverse, symmetrize};
use crate::measures::{ObjectiveProbe, Provenance};

/// Which parameters the likelihood displacement targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interest {
    Full,
    /// The regression coefficients β.
    Beta,
    /// The dispersion parameters (σ² or ξ).
    Dispersion,
}

/// Which `−L̈` enters `H_LD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianForm {
    /// `ModelFit::neg_hessian` (the block approximation for mixed models).
    Stored,
    /// The observed information at `θ̂`.
    Observed,
}

fn interest_block(fit: &ModelFit, interest: Interest) -> Result<Option<(usize, usize)>> {
    let q = fit.q();
    match interest {
        Interest::Full => Ok(None),
        Interest::Beta if fit.q1 > 0 && fit.q1 < q => Ok(Some((0, fit.q1))),
        Interest::Dispersion if fit.q1 > 0 && fit.q1 < q => Ok(Some((fit.q1, q))),
        _ => Err(InfluenceError::InvalidParameter(format!("no separate parameter block for {interest:?}"))),
    }
}

/// `M` in `H_LD = 2ΔᵀMΔ`. For a sub-vector `θ₁` of interest the partitioned
/// form `M = (−L̈)⁻¹ − diag(0, (−L̈₂₂)⁻¹)` (nuisance block `θ₂`) is used.
pub fn ld_weight(fit: &ModelFit, interest: Interest, form: HessianForm) -> Result<DMatrix<f64>> {
    let l = match form {
        HessianForm::Stored => &fit.neg_hessian,
        HessianForm::Observed => &fit.observed_neg_hessian,
    };
    let inv = spd_inverse(l).ok_or(InfluenceError::SingularHessian)?;
    let Some((start, end)) = interest_block(fit, interest)? else {
        return Ok(inv);
    };
    let q = fit.q();
    let nuisance: Vec<usize> = (0..q).filter(|&i| i < start || i >= end).collect();
    let l22 = DMatrix::from_fn(nuisance.len(), nuisance.len(), |a, b| l[(nuisance[a], nuisance[b])]);
    let l22_inv = spd_inverse(&l22).ok_or(InfluenceError::SingularHessian)?;
    let mut m = inv;
    for (a, &i) in nuisance.iter().enumerate() {
        for (b, &j) in nuisance.iter().enumerate() {
            m[(i, j)] -= l22_inv[(a, b)];
        }
    }
    Ok(symmetrize(&m))
}

/// Likelihood displacement probe at the null point of `model`:
/// `f = 0`, `∇ = 0`, `H = 2ΔᵀMΔ` with `Δ` in the model's coordinates.
pub fn ld_probe(
    fit: &ModelFit,
    model: &PerturbedModel,
    interest: Interest,
    form: HessianForm,
) -> Result<ObjectiveProbe> {
    let delta =
        model.delta().ok_or_else(|| InfluenceError::Incompatible(format!("{} has no Δ matrix", model.name())))??;
    if delta.nrows() != fit.q() {
        return Err(InfluenceError::DimensionMismatch { expected: fit.q(), got: delta.nrows() });
    }
    let m = ld_weight(fit, interest, form)?;
    let hess = delta.transpose() * m * &delta * 2.0;
    let p = model.dim();
    Ok(ObjectiveProbe::new(0.0, DVector::zeros(p), hess, Provenance::ClosedForm))
}

#[derive(Debug, Clone, Copy)]
pub struct RefitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RefitOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// `LD(φ) = 2[L(θ̂) − L(θ̂_φ)]` by refitting, warm-started at `θ̂`. For a
/// sub-vector of interest the nuisance block is profiled out of `L`.
pub fn likelihood_displacement(
    fit: &ModelFit,
    model: &PerturbedModel,
    phi: &DVector<f64>,
    interest: Interest,
    opts: RefitOptions,
) -> Result<f64> {
    model.check_domain(phi)?;
    let unperturbed = model
        .likelihood(&model.null_point())
        .ok_or_else(|| InfluenceError::Incompatible(format!("{} has no θ-likelihood", model.name())))?;
    let perturbed = model.likelihood(phi).expect("schemes with a null likelihood have one everywhere");
    let theta = &fit.theta;
    let max = MaximizeOptions { tol: opts.tol, max_iter: opts.max_iter };
    let refit = maximize(perturbed.as_ref(), theta, None, max)?;
    let l0 = unperturbed.value(theta).ok_or_else(|| InfluenceError::NonFiniteValue("L(θ̂)".into()))?;
    let value = match interest_block(fit, interest)? {
        None => unperturbed.value(&refit.theta).ok_or_else(|| InfluenceError::NonFiniteValue("L(θ̂_ω)".into()))?,
        Some((start, end)) => {
            let mut start_theta = theta.clone();
            start_theta.rows_mut(start, end - start).copy_from(&refit.theta.rows(start, end - start));
            let fixed: Vec<bool> = (0..fit.q()).map(|i| i >= start && i < end).collect();
            maximize(unperturbed.as_ref(), &start_theta, Some(&fixed), max)?.value
        }
    };
    Ok(2.0 * (l0 - value))
}

fn variance_weights(param: VarianceParametrization, omega: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = omega.len();
    let mut w = omega.clone();
    let mut dw = DVector::from_element(n, 1.0);
    if let VarianceParametrization::InverseOmegaWithK0(k0) = param {
        w[0] = (k0 - 1.0 + omega[0]) / k0;
        dw[0] = 1.0 / k0;
    }
    (w, dw)
}

fn require_regression(fit: &ModelFit) -> Result<()> {
    if fit.kind != ModelKind::LinearRegression {
        return Err(InfluenceError::Incompatible(format!("neg_rss is not defined for a {} model", fit.kind.tag())));
    }
    Ok(())
}

/// `−RSS(ω) = −Σ w_i r_i(ω)²` with `r(ω)` the residuals of weighted least
/// squares under the variance perturbation.
pub fn neg_rss(fit: &ModelFit, param: VarianceParametrization, omega: &DVector<f64>) -> Result<f64> {
    require_regression(fit)?;
    let x = fit.data.stacked_x();
    let y = fit.data.stacked_y();
    if omega.len() != y.len() {
        return Err(InfluenceError::DimensionMismatch { expected: y.len(), got: omega.len() });
    }
    let (w, _) = variance_weights(param, omega);
    let xtw = DMatrix::from_fn(x.ncols(), x.nrows(), |k, i| x[(i, k)] * w[i]);
    let inv = spd_inverse(&(&xtw * &x)).ok_or(InfluenceError::RankDeficientDesign)?;
    let beta = inv * (&xtw * &y);
    let r = &y - &x * beta;
    Ok(-(0..y.len()).map(|i| w[i] * r[i] * r[i]).sum::<f64>())
}

/// `−RSS` probe at `ω⁰` in the raw variance-scheme coordinates:
/// `∇ = −(r_i²)`, `H = 2D(r)P_XD(r)` (chained through the `k₀` map when used).
pub fn rss_probe(fit: &ModelFit, param: VarianceParametrization) -> Result<ObjectiveProbe> {
    require_regression(fit)?;
    let x = fit.data.stacked_x();
    let r = fit.data.stacked_y() - &x * fit.beta();
    let n = r.len();
    let inv = spd_inverse(&(x.transpose() * &x)).ok_or(InfluenceError::RankDeficientDesign)?;
    let p = &x * inv * x.transpose();
    let (_, dw) = variance_weights(param, &DVector::from_element(n, 1.0));
    let grad = DVector::from_fn(n, |i, _| -r[i] * r[i] * dw[i]);
    let hess = DMatrix::from_fn(n, n, |i, j| 2.0 * r[i] * p[(i, j)] * r[j] * dw[i] * dw[j]);
    Ok(ObjectiveProbe::new(-r.norm_squared(), grad, hess, Provenance::ClosedForm))
}

/// `f(ω) = ℓ(ω | Y, θ̂) − ℓ(ω⁰ | Y, θ̂)` in the model's coordinates.
pub fn loglik_ratio_probe(model: &PerturbedModel) -> Result<ObjectiveProbe> {
    let probe = model
        .loglik_probe()
        .ok_or_else(|| InfluenceError::Incompatible(format!("loglik_ratio is not available for {}", model.name())))??;
    Ok(ObjectiveProbe { f0: 0.0, ..probe })
}
