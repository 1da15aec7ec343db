use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::chart::{pull_back_derivatives, pull_back_geometry, Chart};
use super::scheme::{ClosedGeometry, PerturbationScheme};
use crate::error::{InfluenceError, Result};
use crate::likelihood::ThetaLikelihood;
use crate::measures::{ObjectiveProbe, Provenance};

/// A perturbation scheme seen through zero or more coordinate changes.
///
/// `charts[0]` maps the first new coordinates to the scheme's own ω,
/// `charts[1]` maps the next coordinates to those of `charts[0]`, and so on.
/// Everything public works in the outermost coordinates.
#[derive(Debug, Clone)]
pub struct PerturbedModel {
    scheme: Arc<dyn PerturbationScheme>,
    charts: Vec<Arc<dyn Chart>>,
    null: DVector<f64>,
}

impl PerturbedModel {
    pub fn new(scheme: Arc<dyn PerturbationScheme>) -> Self {
        let null = scheme.null_point();
        Self { scheme, charts: Vec::new(), null }
    }

    pub fn from_scheme(scheme: impl PerturbationScheme + 'static) -> Self {
        Self::new(Arc::new(scheme))
    }

    /// Adds a coordinate change on top of the current coordinates.
    pub fn with_chart(&self, chart: Arc<dyn Chart>) -> Result<Self> {
        if chart.dim() != self.dim() {
            return Err(InfluenceError::DimensionMismatch { expected: self.dim(), got: chart.dim() });
        }
        let null = chart.from_base(&self.null)?;
        let mut charts = self.charts.clone();
        charts.push(chart);
        Ok(Self { scheme: Arc::clone(&self.scheme), charts, null })
    }

    pub fn scheme(&self) -> &Arc<dyn PerturbationScheme> {
        &self.scheme
    }

    pub fn chart_count(&self) -> usize {
        self.charts.len()
    }

    pub fn name(&self) -> String {
        if self.charts.is_empty() {
            self.scheme.name().to_string()
        } else {
            format!("{} (reparametrized x{})", self.scheme.name(), self.charts.len())
        }
    }

    pub fn dim(&self) -> usize {
        self.scheme.dim()
    }

    pub fn null_point(&self) -> DVector<f64> {
        self.null.clone()
    }

    pub fn labels(&self) -> Vec<String> {
        self.scheme.labels()
    }

    pub fn has_sampler(&self) -> bool {
        self.scheme.has_sampler()
    }

    pub fn has_closed_form(&self) -> bool {
        self.scheme.closed_form(&self.scheme.null_point()).is_some()
    }

    /// Points at every level, from the scheme's own coordinates (index 0)
    /// to the outermost ones (last).
    fn levels(&self, phi: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut pts = vec![phi.clone()];
        for chart in self.charts.iter().rev() {
            let next = chart.to_base(pts.last().expect("nonempty"));
            pts.push(next);
        }
        pts.reverse();
        pts
    }

    pub fn to_base(&self, phi: &DVector<f64>) -> DVector<f64> {
        self.levels(phi).swap_remove(0)
    }

    /// Maps to the scheme's coordinates and checks the domain there.
    pub fn check_domain(&self, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.len() != self.dim() {
            return Err(InfluenceError::DimensionMismatch { expected: self.dim(), got: phi.len() });
        }
        if let Some((i, v)) = phi.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(InfluenceError::DomainViolation { coordinate: i, value: *v });
        }
        let base = self.to_base(phi);
        self.scheme.domain().check(&base)?;
        Ok(base)
    }

    pub fn log_density(&self, phi: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.scheme.log_density(&self.to_base(phi), y)
    }

    /// `ℓ(φ | Y_obs, θ̂)`.
    pub fn loglik(&self, phi: &DVector<f64>) -> f64 {
        self.log_density(phi, self.scheme.observed())
    }

    pub fn sample(&self, phi: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        self.scheme.sample(&self.to_base(phi), rng)
    }

    pub fn likelihood(&self, phi: &DVector<f64>) -> Option<Box<dyn ThetaLikelihood>> {
        self.scheme.likelihood(&self.to_base(phi))
    }

    pub fn theta_hat(&self) -> Option<DVector<f64>> {
        self.scheme.theta_hat()
    }

    /// Closed-form geometry transformed into the outer coordinates.
    pub fn closed_geometry(&self, phi: &DVector<f64>) -> Option<Result<ClosedGeometry>> {
        let pts = self.levels(phi);
        let base = self.scheme.closed_form(&pts[0])?;
        Some(base.map(|mut geo| {
            for (k, chart) in self.charts.iter().enumerate() {
                let at = &pts[k + 1];
                geo = pull_back_geometry(&geo, &chart.jacobian(at), &chart.second_derivatives(at));
            }
            geo
        }))
    }

    /// `∂ω_scheme / ∂φ` at φ.
    pub fn jacobian(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let pts = self.levels(phi);
        let mut j = DMatrix::identity(self.dim(), self.dim());
        for (k, chart) in self.charts.iter().enumerate() {
            j *= chart.jacobian(&pts[k + 1]);
        }
        j
    }

    /// Re-expresses a probe given in the scheme's coordinates at ω⁰.
    pub fn pull_back_probe(&self, probe: &ObjectiveProbe) -> ObjectiveProbe {
        if self.charts.is_empty() {
            return probe.clone();
        }
        let pts = self.levels(&self.null);
        let (mut g, mut h) = (probe.grad.clone(), probe.hess.clone());
        for (k, chart) in self.charts.iter().enumerate() {
            let at = &pts[k + 1];
            (g, h) = pull_back_derivatives(&g, &h, &chart.jacobian(at), &chart.second_derivatives(at));
        }
        ObjectiveProbe::new(probe.f0, g, h, probe.provenance)
    }

    /// `Δ` in the outer coordinates.
    pub fn delta(&self) -> Option<Result<DMatrix<f64>>> {
        let base = self.scheme.delta()?;
        Some(base.map(|d| d * self.jacobian(&self.null)))
    }

    /// `(ℓ, ∇ℓ, ∇²ℓ)` of `ℓ(φ | Y, θ̂)` at the null point, outer coordinates.
    pub fn loglik_probe(&self) -> Option<Result<ObjectiveProbe>> {
        let base = self.scheme.loglik_derivatives()?;
        Some(base.map(|(f, g, h)| self.pull_back_probe(&ObjectiveProbe::new(f, g, h, Provenance::ClosedForm))))
    }
}
