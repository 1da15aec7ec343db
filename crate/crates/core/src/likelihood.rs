//! Log-likelihoods in the model parameter θ and a safeguarded Newton maximizer.

use nalgebra::{DMatrix, DVector};

use crate::error::{InfluenceError, Result};
use crate::linalg::symmetrize;

/// `L(θ | ω)` for one fixed perturbation ω, with analytic derivatives.
/// `None` signals a θ outside the parameter space.
pub trait ThetaLikelihood: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> Option<f64>;
    fn score(&self, theta: &DVector<f64>) -> Option<DVector<f64>>;
    fn hessian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct MaximizeOptions {
    /// Converged when `max |score| <= tol * max(1, |L|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct Maximum {
    pub theta: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn free_indices(dim: usize, fixed: Option<&[bool]>) -> Vec<usize> {
    (0..dim).filter(|&i| !fixed.is_some_and(|f| f[i])).collect()
}

/// Newton ascent on the free coordinates. Steps are damped with a
/// Levenberg shift when `-H` is not positive definite and halved until the
/// objective does not decrease.
pub fn maximize(
    lik: &dyn ThetaLikelihood,
    start: &DVector<f64>,
    fixed: Option<&[bool]>,
    opts: MaximizeOptions,
) -> Result<Maximum> {
    let free = free_indices(lik.dim(), fixed);
    let mut theta = start.clone();
    let mut value = lik
        .value(&theta)
        .ok_or_else(|| InfluenceError::InvalidParameter("starting value outside parameter space".into()))?;
    if free.is_empty() {
        return Ok(Maximum { theta, value, iterations: 0 });
    }
    for iter in 0..opts.max_iter {
        let score = lik.score(&theta).ok_or(InfluenceError::NonConvergence { iterations: iter })?;
        let s = DVector::from_iterator(free.len(), free.iter().map(|&i| score[i]));
        if !s.iter().all(|v| v.is_finite()) {
            return Err(InfluenceError::NonFiniteValue("score".into()));
        }
        let converged = s.amax() <= opts.tol * value.abs().max(1.0);
        let h = lik.hessian(&theta).ok_or(InfluenceError::NonConvergence { iterations: iter })?;
        let neg_h = symmetrize(&DMatrix::from_fn(free.len(), free.len(), |a, b| -h[(free[a], free[b])]));
        let step = newton_direction(&neg_h, &s);
        if converged {
            // One polishing step, kept only when it does not lose ground.
            let mut cand = theta.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] += step[a];
            }
            if let Some(v) = lik.value(&cand) {
                if v >= value {
                    theta = cand;
                    value = v;
                }
            }
            return Ok(Maximum { theta, value, iterations: iter });
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand = theta.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] += t * step[a];
            }
            if let Some(v) = lik.value(&cand) {
                if v.is_finite() && v >= value - 1e-12 * value.abs().max(1.0) {
                    theta = cand;
                    value = v;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(InfluenceError::NonConvergence { iterations: iter });
        }
    }
    Err(InfluenceError::NonConvergence { iterations: opts.max_iter })
}

fn newton_direction(neg_h: &DMatrix<f64>, s: &DVector<f64>) -> DVector<f64> {
    let n = neg_h.nrows();
    let scale = (0..n).map(|i| neg_h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut shift = 0.0;
    loop {
        let m = neg_h + DMatrix::identity(n, n) * shift;
        if let Some(ch) = nalgebra::Cholesky::new(m) {
            return ch.solve(s);
        }
        shift = if shift == 0.0 { 1e-8 * scale } else { shift * 10.0 };
    }
}

/// Central finite-difference derivatives of a likelihood in θ, for tests.
pub fn fd_score(lik: &dyn ThetaLikelihood, theta: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(theta.len(), |i, _| {
        let mut a = theta.clone();
        let mut b = theta.clone();
        let step = h * theta[i].abs().max(1.0);
        a[i] += step;
        b[i] -= step;
        (lik.value(&a).unwrap_or(f64::NAN) - lik.value(&b).unwrap_or(f64::NAN)) / (2.0 * step)
    })
}
