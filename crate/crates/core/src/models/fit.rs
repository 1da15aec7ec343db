//! Maximum-likelihood fits of the base models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::covariance::CovarianceStructure;
use super::data::ClusteredDataset;
use super::density::BaseDensity;
use super::likelihoods::{ExponentialLikelihood, IndepLikelihood, LmmLikelihood};
use crate::error::{InfluenceError, Result};
use crate::likelihood::{maximize, MaximizeOptions, ThetaLikelihood};
use crate::linalg::{spd_inverse, symmetrize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    IidParametric,
    LocationScale,
    LinearRegression,
    LinearMixed,
}

impl ModelKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ModelKind::IidParametric => "iid_parametric",
            ModelKind::LocationScale => "location_scale",
            ModelKind::LinearRegression => "linear_regression",
            ModelKind::LinearMixed => "linear_mixed",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [ModelKind::IidParametric, ModelKind::LocationScale, ModelKind::LinearRegression, ModelKind::LinearMixed]
            .into_iter()
            .find(|k| k.tag() == tag)
    }

    pub fn is_independent(&self) -> bool {
        !matches!(self, ModelKind::LinearMixed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Logistic,
    Exponential,
}

impl Family {
    pub fn tag(&self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Logistic => "logistic",
            Family::Exponential => "exponential",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [Family::Gaussian, Family::Logistic, Family::Exponential].into_iter().find(|f| f.tag() == tag)
    }

    /// The standardized density of a location-scale family.
    pub fn base(&self) -> Option<BaseDensity> {
        match self {
            Family::Gaussian => Some(BaseDensity::Gaussian),
            Family::Logistic => Some(BaseDensity::Logistic),
            Family::Exponential => None,
        }
    }
}

/// A fitted base model. Independent models use `θ = (β, σ²)` (or `θ = (λ)`
/// for the exponential family); mixed models use `θ = (β, ξ)`.
#[derive(Debug, Clone)]
pub struct ModelFit {
    pub kind: ModelKind,
    pub family: Family,
    pub data: Arc<ClusteredDataset>,
    pub theta: DVector<f64>,
    pub q1: usize,
    pub q2: usize,
    pub covariance: Option<CovarianceStructure>,
    pub loglik: f64,
    /// `−L̈` as used by likelihood displacement; the block approximation for
    /// mixed models, the observed information otherwise.
    pub neg_hessian: DMatrix<f64>,
    /// `−∂²L/∂θ∂θᵀ` at `θ̂`.
    pub observed_neg_hessian: DMatrix<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting ξ for mixed models; a structure-specific default otherwise.
    pub xi_start: Option<DVector<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, xi_start: None }
    }
}

impl ModelFit {
    pub fn beta(&self) -> DVector<f64> {
        self.theta.rows(0, self.q1).into_owned()
    }

    /// `σ²` of an independent location-scale model.
    pub fn sigma2(&self) -> Option<f64> {
        (self.kind.is_independent() && self.family != Family::Exponential).then(|| self.theta[self.q1])
    }

    /// `ξ` of a mixed model.
    pub fn xi(&self) -> Option<DVector<f64>> {
        (self.kind == ModelKind::LinearMixed).then(|| self.theta.rows(self.q1, self.q2).into_owned())
    }

    pub fn q(&self) -> usize {
        self.theta.len()
    }

    /// Per-cluster residuals `e_i = y_i − x_iβ`.
    pub fn residuals(&self) -> Vec<DVector<f64>> {
        let beta = self.beta();
        self.data.clusters().iter().map(|c| &c.y - &c.x * &beta).collect()
    }

    /// The unperturbed likelihood as a function of θ.
    pub fn likelihood(&self) -> Box<dyn ThetaLikelihood> {
        match (self.kind, self.family) {
            (ModelKind::LinearMixed, _) => Box::new(LmmLikelihood::unperturbed(
                Arc::clone(&self.data),
                self.covariance.expect("mixed fits carry a covariance structure"),
            )),
            (_, Family::Exponential) => {
                let y = self.data.stacked_y();
                let n = y.len();
                Box::new(ExponentialLikelihood { y, kappa: DVector::from_element(n, 1.0) })
            }
            (_, f) => Box::new(IndepLikelihood::unperturbed(
                f.base().expect("location-scale family"),
                self.data.stacked_y(),
                self.data.stacked_x(),
            )),
        }
    }

    /// A fit whose θ is taken as known instead of estimated.
    pub fn with_known_theta(
        kind: ModelKind,
        family: Family,
        data: Arc<ClusteredDataset>,
        theta: DVector<f64>,
        covariance: Option<CovarianceStructure>,
    ) -> Result<Self> {
        let q1 = data.q1();
        let q2 = theta.len().saturating_sub(if family == Family::Exponential { 0 } else { q1 });
        let mut fit = Self {
            kind,
            family,
            data,
            theta,
            q1: if family == Family::Exponential { 0 } else { q1 },
            q2,
            covariance,
            loglik: 0.0,
            neg_hessian: DMatrix::zeros(0, 0),
            observed_neg_hessian: DMatrix::zeros(0, 0),
            iterations: 0,
        };
        let lik = fit.likelihood();
        if lik.dim() != fit.theta.len() {
            return Err(InfluenceError::DimensionMismatch { expected: lik.dim(), got: fit.theta.len() });
        }
        fit.finish(lik.as_ref())?;
        Ok(fit)
    }

    fn finish(&mut self, lik: &dyn ThetaLikelihood) -> Result<()> {
        self.loglik = lik
            .value(&self.theta)
            .ok_or_else(|| InfluenceError::InvalidParameter("θ outside the parameter space".into()))?;
        let h = lik.hessian(&self.theta).ok_or_else(|| InfluenceError::NonFiniteValue("Hessian".into()))?;
        self.observed_neg_hessian = symmetrize(&(-h));
        self.neg_hessian = match self.kind {
            ModelKind::LinearMixed => LmmLikelihood::unperturbed(
                Arc::clone(&self.data),
                self.covariance.expect("mixed fits carry a covariance structure"),
            )
            .block_information(&self.theta)
            .ok_or_else(|| InfluenceError::NonFiniteValue("block information".into()))?,
            _ => self.observed_neg_hessian.clone(),
        };
        Ok(())
    }
}

fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let xtx = x.transpose() * x;
    let inv = spd_inverse(&xtx).ok_or(InfluenceError::RankDeficientDesign)?;
    if crate::linalg::condition_number(&xtx) > 1e13 {
        return Err(InfluenceError::RankDeficientDesign);
    }
    Ok(inv * x.transpose() * y)
}

/// Fits `kind` to `data`. `covariance` is required for mixed models and
/// ignored otherwise.
pub fn fit_model(
    data: Arc<ClusteredDataset>,
    kind: ModelKind,
    family: Family,
    covariance: Option<CovarianceStructure>,
    opts: FitOptions,
) -> Result<ModelFit> {
    let y = data.stacked_y();
    let x = data.stacked_x();
    let n = y.len() as f64;
    let max = MaximizeOptions { tol: opts.tol, max_iter: opts.max_iter };
    let q1 = data.q1();
    if kind.is_independent() && data.clusters().iter().any(|c| c.size() != 1) {
        return Err(InfluenceError::Incompatible(format!("{} needs one observation per cluster", kind.tag())));
    }
    let (theta, iterations, q1, q2) = match (kind, family) {
        (ModelKind::LinearMixed, Family::Gaussian) => {
            let structure = covariance
                .ok_or_else(|| InfluenceError::InvalidParameter("mixed models need a covariance structure".into()))?;
            if structure.needs_covariate() && data.clusters().iter().any(|c| c.d.is_none()) {
                return Err(InfluenceError::InvalidParameter(format!("{} needs the covariate d", structure.tag())));
            }
            let beta = least_squares(&x, &y)?;
            let r = &y - &x * &beta;
            let start_xi = match &opts.xi_start {
                Some(xi) if xi.len() != structure.n_params() => {
                    return Err(InfluenceError::DimensionMismatch { expected: structure.n_params(), got: xi.len() })
                }
                Some(xi) => {
                    structure.build(xi, 1, Some(&DVector::zeros(1)))?;
                    xi.clone()
                }
                None => structure.default_start(r.norm_squared() / n),
            };
            let mut start = DVector::zeros(q1 + structure.n_params());
            start.rows_mut(0, q1).copy_from(&beta);
            start.rows_mut(q1, structure.n_params()).copy_from(&start_xi);
            let lik = LmmLikelihood::unperturbed(Arc::clone(&data), structure);
            let m = maximize(&lik, &start, None, max)?;
            (m.theta, m.iterations, q1, structure.n_params())
        }
        (ModelKind::LinearMixed, f) => return Err(InfluenceError::UnsupportedFamily(f.tag().into())),
        (_, Family::Exponential) => {
            if y.iter().any(|&v| v < 0.0) {
                return Err(InfluenceError::InvalidParameter("exponential responses must be nonnegative".into()));
            }
            let mean = y.mean();
            if !(mean > 0.0) {
                return Err(InfluenceError::InvalidParameter("exponential responses are all zero".into()));
            }
            (DVector::from_element(1, 1.0 / mean), 0, 0, 1)
        }
        (_, Family::Gaussian) => {
            let beta = least_squares(&x, &y)?;
            let rss = (&y - &x * &beta).norm_squared();
            let mut theta = DVector::zeros(q1 + 1);
            theta.rows_mut(0, q1).copy_from(&beta);
            theta[q1] = rss / n;
            if !(theta[q1] > 0.0) {
                return Err(InfluenceError::InvalidParameter("residual variance is zero".into()));
            }
            (theta, 0, q1, 1)
        }
        (_, Family::Logistic) => {
            let beta = least_squares(&x, &y)?;
            let rss = (&y - &x * &beta).norm_squared();
            let mut start = DVector::zeros(q1 + 1);
            start.rows_mut(0, q1).copy_from(&beta);
            start[q1] = (rss / n).max(1e-12);
            let lik = IndepLikelihood::unperturbed(BaseDensity::Logistic, y.clone(), x.clone());
            let m = maximize(&lik, &start, None, max)?;
            (m.theta, m.iterations, q1, 1)
        }
    };
    let mut fit = ModelFit {
        kind,
        family,
        data,
        theta,
        q1,
        q2,
        covariance: (kind == ModelKind::LinearMixed).then_some(covariance).flatten(),
        loglik: 0.0,
        neg_hessian: DMatrix::zeros(0, 0),
        observed_neg_hessian: DMatrix::zeros(0, 0),
        iterations,
    };
    let lik = fit.likelihood();
    fit.finish(lik.as_ref())?;
    Ok(fit)
}
