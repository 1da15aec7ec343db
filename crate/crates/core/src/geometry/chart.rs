//! Coordinate changes on the perturbation manifold.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use super::scheme::ClosedGeometry;
use crate::error::{InfluenceError, Result};

/// Sparse second derivatives `∂²ω_j / ∂φ_a ∂φ_b` as `(j, a, b, value)`.
pub type SecondDerivatives = Vec<(usize, usize, usize, f64)>;

/// A diffeomorphism `ω = ω(φ)` from new coordinates φ to the previous ones.
pub trait Chart: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn to_base(&self, phi: &DVector<f64>) -> DVector<f64>;
    #[allow(clippy::wrong_self_convention)]
    fn from_base(&self, omega: &DVector<f64>) -> Result<DVector<f64>>;
    /// `Ψ = ∂ω/∂φ`.
    fn jacobian(&self, phi: &DVector<f64>) -> DMatrix<f64>;
    fn second_derivatives(&self, phi: &DVector<f64>) -> SecondDerivatives;
}

/// `ω = center + Ψ (φ − center)`.
#[derive(Debug, Clone)]
pub struct AffineChart {
    center: DVector<f64>,
    psi: DMatrix<f64>,
    psi_inv: DMatrix<f64>,
}

impl AffineChart {
    pub fn new(center: DVector<f64>, psi: DMatrix<f64>) -> Result<Self> {
        let psi_inv = psi
            .clone()
            .try_inverse()
            .ok_or_else(|| InfluenceError::SingularMetric("affine chart Jacobian is singular".into()))?;
        Ok(Self { center, psi, psi_inv })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.psi
    }
}

impl Chart for AffineChart {
    fn dim(&self) -> usize {
        self.psi.ncols()
    }

    fn to_base(&self, phi: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.psi * (phi - &self.center)
    }

    fn from_base(&self, omega: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.center + &self.psi_inv * (omega - &self.center))
    }

    fn jacobian(&self, _phi: &DVector<f64>) -> DMatrix<f64> {
        self.psi.clone()
    }

    fn second_derivatives(&self, _phi: &DVector<f64>) -> SecondDerivatives {
        Vec::new()
    }
}

/// Componentwise polynomial map `φ_i = ω⁰_i + a_i d + c_i d² + b_i d³` with
/// `d = ω_i − ω⁰_i`. The chart direction is its inverse `ω(φ)`.
#[derive(Debug, Clone)]
pub struct ComponentwiseDiffeo {
    pub center: DVector<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
}

impl ComponentwiseDiffeo {
    /// Rejects maps that are not strictly increasing on the whole line.
    pub fn new(center: DVector<f64>, a: Vec<f64>, c: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let p = center.len();
        if a.len() != p || b.len() != p || c.len() != p {
            return Err(InfluenceError::DimensionMismatch { expected: p, got: a.len().min(b.len()).min(c.len()) });
        }
        for i in 0..p {
            let ok = a[i] > 0.0 && b[i] >= 0.0 && (c[i] == 0.0 || c[i] * c[i] < 3.0 * a[i] * b[i]);
            if !ok || !(a[i].is_finite() && b[i].is_finite() && c[i].is_finite()) {
                return Err(InfluenceError::NonMonotoneDiffeo(format!(
                    "component {i}: a = {}, c = {}, b = {}",
                    a[i], c[i], b[i]
                )));
            }
        }
        Ok(Self { center, a, c, b })
    }

    pub fn identity(center: DVector<f64>) -> Self {
        let p = center.len();
        Self { center, a: vec![1.0; p], c: vec![0.0; p], b: vec![0.0; p] }
    }

    fn forward_1d(&self, i: usize, d: f64) -> f64 {
        self.a[i] * d + self.c[i] * d * d + self.b[i] * d * d * d
    }

    fn slope_1d(&self, i: usize, d: f64) -> f64 {
        self.a[i] + 2.0 * self.c[i] * d + 3.0 * self.b[i] * d * d
    }

    fn curvature_1d(&self, i: usize, d: f64) -> f64 {
        2.0 * self.c[i] + 6.0 * self.b[i] * d
    }

    /// `φ(ω)`.
    pub fn forward(&self, omega: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(omega.len(), |i, _| self.center[i] + self.forward_1d(i, omega[i] - self.center[i]))
    }

    /// `Φ = ∂φ/∂ω` at ω.
    pub fn forward_jacobian(&self, omega: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_fn(omega.len(), |i, _| self.slope_1d(i, omega[i] - self.center[i])))
    }

    fn invert_1d(&self, i: usize, target: f64) -> f64 {
        // Newton from the linear guess, safeguarded by bisection on a bracket.
        let mut d = target / self.a[i];
        let span = 1.0 + d.abs();
        let (mut lo, mut hi) = (-span, span);
        while self.forward_1d(i, lo) > target {
            lo *= 2.0;
        }
        while self.forward_1d(i, hi) < target {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let f = self.forward_1d(i, d) - target;
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                hi = d;
            } else {
                lo = d;
            }
            let mut next = d - f / self.slope_1d(i, d);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - d).abs() <= 1e-16 * (1.0 + d.abs()) {
                d = next;
                break;
            }
            d = next;
        }
        d
    }
}

impl Chart for ComponentwiseDiffeo {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn to_base(&self, phi: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(phi.len(), |i, _| self.center[i] + self.invert_1d(i, phi[i] - self.center[i]))
    }

    fn from_base(&self, omega: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.forward(omega))
    }

    fn jacobian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let omega = self.to_base(phi);
        DMatrix::from_diagonal(&DVector::from_fn(phi.len(), |i, _| 1.0 / self.slope_1d(i, omega[i] - self.center[i])))
    }

    fn second_derivatives(&self, phi: &DVector<f64>) -> SecondDerivatives {
        let omega = self.to_base(phi);
        (0..phi.len())
            .filter_map(|i| {
                let d = omega[i] - self.center[i];
                let s = self.slope_1d(i, d);
                let v = -self.curvature_1d(i, d) / (s * s * s);
                (v != 0.0).then_some((i, i, i, v))
            })
            .collect()
    }
}

/// Pulls geometry back through a chart: `G' = ΨᵀGΨ`, `T` as a 3-tensor and
/// `Γ'_abc = Σ Γ_ijk Ψ_ia Ψ_jb Ψ_kc + Σ_jk g_jk (∂²ω_j/∂φ_a∂φ_b) Ψ_kc`.
pub fn pull_back_geometry(
    geo: &ClosedGeometry,
    psi: &DMatrix<f64>,
    second: &[(usize, usize, usize, f64)],
) -> ClosedGeometry {
    let g = crate::linalg::symmetrize(&(psi.transpose() * &geo.g * psi));
    let t = geo.t.contract(psi);
    let mut gamma0 = geo.gamma0.contract(psi);
    if !second.is_empty() {
        let g_psi = &geo.g * psi;
        for &(j, a, b, v) in second {
            for c in 0..psi.ncols() {
                gamma0.add(a, b, c, v * g_psi[(j, c)]);
            }
        }
    }
    ClosedGeometry { g, t, gamma0 }
}

/// Pulls an objective's gradient and Hessian back through a chart:
/// `∇' = Ψᵀ∇`, `H' = ΨᵀHΨ + Σ_j ∇_j ∂²ω_j/∂φ∂φᵀ`.
pub fn pull_back_derivatives(
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    second: &[(usize, usize, usize, f64)],
) -> (DVector<f64>, DMatrix<f64>) {
    let g = psi.transpose() * grad;
    let mut h = psi.transpose() * hess * psi;
    for &(j, a, b, v) in second {
        h[(a, b)] += grad[j] * v;
    }
    (g, crate::linalg::symmetrize(&h))
}
