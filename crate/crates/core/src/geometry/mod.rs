//! The statistical perturbation manifold: metric, skewness, α-connections,
//! lengths, distances, geodesics, appropriateness and rescaling.

mod appropriate;
mod chart;
mod model;
pub mod montecarlo;
mod path;
mod scheme;

use nalgebra::{DMatrix, DVector};

pub use appropriate::{
    appropriateness_report, appropriateness_report_default, rescale_perturbation, AppropriatenessVerdict,
    DEFAULT_ISO_TOLERANCE, DEFAULT_PD_TOLERANCE,
};
pub use chart::{
    pull_back_derivatives, pull_back_geometry, AffineChart, Chart, ComponentwiseDiffeo, SecondDerivatives,
};
pub use model::PerturbedModel;
pub use montecarlo::McOptions;
pub use path::{geodesic_trace, path_distance, speeds, SampledPath, DEFAULT_STEPS_PER_UNIT};
pub use scheme::{ClosedGeometry, Domain, LoglikDerivatives, PerturbationScheme};

use crate::error::{InfluenceError, Result};
use crate::linalg::{condition_number, sym_pd_inverse};
use crate::tensor::Tensor3;

/// Largest condition number for which `G` counts as invertible.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySource {
    ClosedForm,
    MonteCarlo { draws: usize, seed: u64, g_stderr: DMatrix<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometryAtPoint {
    pub omega: DVector<f64>,
    pub alpha: f64,
    pub g: DMatrix<f64>,
    pub t: Tensor3,
    pub gamma0: Tensor3,
    pub gamma_alpha: Tensor3,
    /// `G⁻¹`, absent when the condition number exceeds [`MAX_CONDITION`].
    pub ginv: Option<DMatrix<f64>>,
    pub source: GeometrySource,
}

impl GeometryAtPoint {
    pub fn from_parts(
        omega: DVector<f64>,
        alpha: f64,
        g: DMatrix<f64>,
        t: Tensor3,
        gamma0: Tensor3,
        source: GeometrySource,
    ) -> Self {
        let g = crate::linalg::symmetrize(&g);
        let gamma_alpha = gamma0.axpy(-0.5 * alpha, &t);
        let ginv =
            if g.nrows() > 0 && condition_number(&g) <= MAX_CONDITION { sym_pd_inverse(&g, 0.0).ok() } else { None };
        Self { omega, alpha, g, t, gamma0, gamma_alpha, ginv, source }
    }

    /// A metric-only geometry (flat connection), handy for standalone use
    /// of the measures.
    pub fn from_metric(omega: DVector<f64>, g: DMatrix<f64>) -> Self {
        let p = g.nrows();
        Self::from_parts(omega, 0.0, g, Tensor3::zeros(p), Tensor3::zeros(p), GeometrySource::ClosedForm)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn require_ginv(&self) -> Result<&DMatrix<f64>> {
        self.ginv.as_ref().ok_or_else(|| {
            InfluenceError::SingularMetric(format!("condition number {:.3e}", condition_number(&self.g)))
        })
    }
}

/// `G`, `T`, `Γ⁰` and `Γ^α = Γ⁰ − (α/2)T` at ω, from the closed form when the
/// scheme has one and by Monte Carlo otherwise.
pub fn geometry_at(model: &PerturbedModel, omega: &DVector<f64>, alpha: f64) -> Result<GeometryAtPoint> {
    geometry_at_with(model, omega, alpha, McOptions::default())
}

pub fn geometry_at_with(
    model: &PerturbedModel,
    omega: &DVector<f64>,
    alpha: f64,
    mc: McOptions,
) -> Result<GeometryAtPoint> {
    model.check_domain(omega)?;
    if let Some(closed) = model.closed_geometry(omega) {
        let geo = closed?;
        return Ok(GeometryAtPoint::from_parts(
            omega.clone(),
            alpha,
            geo.g,
            geo.t,
            geo.gamma0,
            GeometrySource::ClosedForm,
        ));
    }
    if !model.has_sampler() {
        return Err(InfluenceError::GeometryUnavailable(model.name()));
    }
    let m = montecarlo::mc_moments(model, omega, mc, None, true)?;
    Ok(GeometryAtPoint::from_parts(
        omega.clone(),
        alpha,
        m.g,
        m.t.expect("third-order moments requested"),
        m.gamma0.expect("third-order moments requested"),
        GeometrySource::MonteCarlo { draws: m.draws, seed: mc.seed, g_stderr: m.g_stderr },
    ))
}

/// Squared length `hᵀGh` of a tangent vector.
pub fn tangent_length(geom: &GeometryAtPoint, h: &DVector<f64>) -> Result<f64> {
    if h.len() != geom.dim() {
        return Err(InfluenceError::DimensionMismatch { expected: geom.dim(), got: h.len() });
    }
    Ok(h.dot(&(&geom.g * h)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_length_examples() {
        let o = DVector::zeros(2);
        let g = GeometryAtPoint::from_metric(o.clone(), DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.5])));
        assert_eq!(tangent_length(&g, &DVector::from_vec(vec![1.0, 2.0])).unwrap(), 12.0);
        let half = GeometryAtPoint::from_metric(o, DMatrix::identity(2, 2) * 0.5);
        assert_eq!(tangent_length(&half, &DVector::from_vec(vec![1.0, 1.0])).unwrap(), 1.0);
        assert!(matches!(
            tangent_length(&half, &DVector::from_vec(vec![1.0])),
            Err(InfluenceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gamma_alpha_is_shifted_by_skewness() {
        let t = Tensor3::diagonal(&[-1.0, -2.0]);
        let g0 = t.scale(0.5);
        let geo = GeometryAtPoint::from_parts(
            DVector::zeros(2),
            0.7,
            DMatrix::identity(2, 2),
            t.clone(),
            g0.clone(),
            GeometrySource::ClosedForm,
        );
        for i in 0..2 {
            assert_eq!(geo.gamma_alpha.get(i, i, i), g0.get(i, i, i) - 0.35 * t.get(i, i, i));
        }
    }
}
