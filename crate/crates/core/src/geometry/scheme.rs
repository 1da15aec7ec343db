use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{InfluenceError, Result};
use crate::likelihood::ThetaLikelihood;
use crate::tensor::Tensor3;

/// Per-coordinate open intervals `(lower_i, upper_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Domain {
    pub fn unbounded(p: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; p], upper: vec![f64::INFINITY; p] }
    }

    pub fn positive(p: usize) -> Self {
        Self { lower: vec![0.0; p], upper: vec![f64::INFINITY; p] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn check(&self, omega: &DVector<f64>) -> Result<()> {
        if omega.len() != self.dim() {
            return Err(InfluenceError::DimensionMismatch { expected: self.dim(), got: omega.len() });
        }
        for (i, &w) in omega.iter().enumerate() {
            if !(w > self.lower[i] && w < self.upper[i]) {
                return Err(InfluenceError::DomainViolation { coordinate: i, value: w });
            }
        }
        Ok(())
    }
}

/// Closed-form `G`, `T` and Levi-Civita `Γ⁰` at one point. `Γ⁰_ijk` is
/// symmetric in `(i, j)`; `k` is the lowered index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedGeometry {
    pub g: DMatrix<f64>,
    pub t: Tensor3,
    pub gamma0: Tensor3,
}

impl ClosedGeometry {
    pub fn flat(g: DMatrix<f64>) -> Self {
        let p = g.nrows();
        Self { g, t: Tensor3::zeros(p), gamma0: Tensor3::zeros(p) }
    }

    /// Diagonal geometry of independent one-dimensional components, with
    /// `Γ⁰_iii = ½ ∂_i g_ii`.
    pub fn diagonal(g: &[f64], t: &[f64], dg: &[f64]) -> Self {
        let half: Vec<f64> = dg.iter().map(|v| 0.5 * v).collect();
        Self {
            g: DMatrix::from_diagonal(&DVector::from_column_slice(g)),
            t: Tensor3::diagonal(t),
            gamma0: Tensor3::diagonal(&half),
        }
    }
}

/// A perturbation scheme `ω ↦ p(Y | θ̂, ω)` attached to a fitted model.
///
/// `θ` is held at its estimate for everything geometric. Data samples are
/// stacked response vectors.
/// Value, gradient and Hessian of a scalar in ω.
pub type LoglikDerivatives = (f64, DVector<f64>, DMatrix<f64>);

pub trait PerturbationScheme: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn null_point(&self) -> DVector<f64>;
    fn domain(&self) -> &Domain;

    fn labels(&self) -> Vec<String> {
        (1..=self.dim()).map(|i| i.to_string()).collect()
    }

    /// The observed responses.
    fn observed(&self) -> &DVector<f64>;

    /// `ℓ(ω | y, θ̂)`.
    fn log_density(&self, omega: &DVector<f64>, y: &DVector<f64>) -> f64;

    fn closed_form(&self, _omega: &DVector<f64>) -> Option<Result<ClosedGeometry>> {
        None
    }

    fn has_sampler(&self) -> bool {
        false
    }

    /// One draw of `Y` from `p(Y | θ̂, ω)`.
    fn sample(&self, _omega: &DVector<f64>, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }

    /// `L(θ | ω)` on the observed data as a function of θ.
    fn likelihood(&self, _omega: &DVector<f64>) -> Option<Box<dyn ThetaLikelihood>> {
        None
    }

    fn theta_hat(&self) -> Option<DVector<f64>> {
        None
    }

    /// `Δ = ∂²L(θ|ω)/∂θ∂ωᵀ` at `(θ̂, ω⁰)`, a `q × p` matrix.
    fn delta(&self) -> Option<Result<DMatrix<f64>>> {
        None
    }

    /// Value, gradient and Hessian of `ℓ(ω | Y, θ̂)` in ω at ω⁰.
    fn loglik_derivatives(&self) -> Option<Result<LoglikDerivatives>> {
        None
    }
}
