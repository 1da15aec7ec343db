//! Perturbation schemes for the linear mixed model: per-cluster covariance
//! weights, per-cluster mean shifts and per-observation mean shifts.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::covariance::CovarianceStructure;
use super::data::ClusteredDataset;
use super::fit::{ModelFit, ModelKind};
use super::likelihoods::{cluster_terms, LmmLikelihood};
use super::standardize;
use crate::error::{InfluenceError, Result};
use crate::geometry::{ClosedGeometry, Domain, PerturbationScheme, PerturbedModel};
use crate::likelihood::ThetaLikelihood;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmmPerturbation {
    /// `Cov(y_i) = Σ_i / ω_i`, `ω⁰ = 1`.
    Covariance,
    /// `y_i + ω_i 1`, `ω⁰ = 0`.
    ClusterShift,
    /// `y_i + ω_i` with one coordinate per observation, `ω⁰ = 0`.
    MeanShift,
}

impl LmmPerturbation {
    pub fn tag(&self) -> &'static str {
        match self {
            LmmPerturbation::Covariance => "lmm_cov",
            LmmPerturbation::ClusterShift => "lmm_cluster_shift",
            LmmPerturbation::MeanShift => "lmm_mean_shift",
        }
    }
}

#[derive(Debug)]
struct ClusterFit {
    mean: DVector<f64>,
    inv: DMatrix<f64>,
    chol: DMatrix<f64>,
    logdet: f64,
    e: DVector<f64>,
    d1: Vec<DMatrix<f64>>,
}

#[derive(Debug)]
pub struct LmmScheme {
    perturbation: LmmPerturbation,
    data: Arc<ClusteredDataset>,
    structure: CovarianceStructure,
    theta: DVector<f64>,
    clusters: Vec<ClusterFit>,
    /// Start of each cluster in the stacked response.
    starts: Vec<usize>,
    y: DVector<f64>,
    labels: Vec<String>,
    domain: Domain,
    null: DVector<f64>,
}

/// The raw scheme, its Eq.-(5) standardization with `c = 1`, and `Δ` in the
/// raw coordinates.
#[derive(Debug, Clone)]
pub struct LmmSchemes {
    pub raw: PerturbedModel,
    pub appropriate: PerturbedModel,
    pub delta: DMatrix<f64>,
}

impl LmmScheme {
    pub fn new(fit: &ModelFit, perturbation: LmmPerturbation) -> Result<Self> {
        if fit.kind != ModelKind::LinearMixed {
            return Err(InfluenceError::Incompatible(format!(
                "{} is not defined for a {} model",
                perturbation.tag(),
                fit.kind.tag()
            )));
        }
        let structure = fit.covariance.expect("mixed fits carry a covariance structure");
        let beta = fit.beta();
        let xi = fit.xi().expect("mixed fit");
        let mut clusters = Vec::with_capacity(fit.data.n());
        for c in fit.data.clusters() {
            let t = cluster_terms(structure, &xi, &c.x, &c.y, c.d.as_ref(), &beta).ok_or_else(|| {
                InfluenceError::InvalidParameter(format!("Σ_i(ξ̂) is not positive definite for cluster `{}`", c.id))
            })?;
            let chol = t.block.sigma.clone().cholesky().expect("checked in cluster_terms").l();
            clusters.push(ClusterFit {
                mean: &c.x * &beta,
                inv: t.inv,
                chol,
                logdet: t.logdet,
                e: t.e,
                d1: t.block.d1,
            });
        }
        let mut starts = Vec::with_capacity(fit.data.n());
        let mut acc = 0;
        for c in fit.data.clusters() {
            starts.push(acc);
            acc += c.size();
        }
        let n = fit.data.n();
        let (labels, domain, null) = match perturbation {
            LmmPerturbation::Covariance => {
                (fit.data.cluster_labels(), Domain::positive(n), DVector::from_element(n, 1.0))
            }
            LmmPerturbation::ClusterShift => (fit.data.cluster_labels(), Domain::unbounded(n), DVector::zeros(n)),
            LmmPerturbation::MeanShift => {
                let labels = fit
                    .data
                    .clusters()
                    .iter()
                    .flat_map(|c| (0..c.size()).map(move |l| format!("{}:{}", c.id, c.obs_label(l))))
                    .collect();
                (labels, Domain::unbounded(acc), DVector::zeros(acc))
            }
        };
        Ok(Self {
            perturbation,
            data: Arc::clone(&fit.data),
            structure,
            theta: fit.theta.clone(),
            clusters,
            starts,
            y: fit.data.stacked_y(),
            labels,
            domain,
            null,
        })
    }

    /// `(w_i, o_i)` of each cluster at ω.
    fn channels(&self, omega: &DVector<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
        let n = self.clusters.len();
        let sizes = self.data.sizes();
        match self.perturbation {
            LmmPerturbation::Covariance => {
                (omega.iter().copied().collect(), sizes.iter().map(|&m| DVector::zeros(m)).collect())
            }
            LmmPerturbation::ClusterShift => {
                (vec![1.0; n], sizes.iter().enumerate().map(|(i, &m)| DVector::from_element(m, omega[i])).collect())
            }
            LmmPerturbation::MeanShift => (
                vec![1.0; n],
                sizes.iter().enumerate().map(|(i, &m)| omega.rows(self.starts[i], m).into_owned()).collect(),
            ),
        }
    }
}

impl PerturbationScheme for LmmScheme {
    fn name(&self) -> &str {
        self.perturbation.tag()
    }

    fn dim(&self) -> usize {
        self.null.len()
    }

    fn null_point(&self) -> DVector<f64> {
        self.null.clone()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn observed(&self) -> &DVector<f64> {
        &self.y
    }

    fn log_density(&self, omega: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let (w, o) = self.channels(omega);
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let m = c.mean.len();
                let e = y.rows(self.starts[i], m) + &o[i] - &c.mean;
                let mf = m as f64;
                -0.5 * mf * LN_2PI - 0.5 * c.logdet + 0.5 * mf * w[i].ln() - 0.5 * w[i] * e.dot(&(&c.inv * &e))
            })
            .sum()
    }

    fn closed_form(&self, omega: &DVector<f64>) -> Option<Result<ClosedGeometry>> {
        let geo = match self.perturbation {
            LmmPerturbation::Covariance => {
                let m: Vec<f64> = self.clusters.iter().map(|c| c.mean.len() as f64).collect();
                let g: Vec<f64> = m.iter().zip(omega.iter()).map(|(m, w)| 0.5 * m / (w * w)).collect();
                let t: Vec<f64> = m.iter().zip(omega.iter()).map(|(m, w)| -m / w.powi(3)).collect();
                ClosedGeometry::diagonal(&g, &t, &t)
            }
            LmmPerturbation::ClusterShift => {
                let g: Vec<f64> = self.clusters.iter().map(|c| c.inv.sum()).collect();
                ClosedGeometry::flat(DMatrix::from_diagonal(&DVector::from_vec(g)))
            }
            LmmPerturbation::MeanShift => {
                let p = self.dim();
                let mut g = DMatrix::zeros(p, p);
                for (c, &s) in self.clusters.iter().zip(&self.starts) {
                    let m = c.mean.len();
                    g.view_mut((s, s), (m, m)).copy_from(&c.inv);
                }
                ClosedGeometry::flat(g)
            }
        };
        Some(Ok(geo))
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample(&self, omega: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let (w, o) = self.channels(omega);
        let mut y = DVector::zeros(self.y.len());
        for (i, c) in self.clusters.iter().enumerate() {
            let m = c.mean.len();
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(rng));
            let yi = &c.mean + &c.chol * z / w[i].sqrt() - &o[i];
            y.rows_mut(self.starts[i], m).copy_from(&yi);
        }
        Some(y)
    }

    fn likelihood(&self, omega: &DVector<f64>) -> Option<Box<dyn ThetaLikelihood>> {
        let (weights, offsets) = self.channels(omega);
        Some(Box::new(LmmLikelihood { data: Arc::clone(&self.data), structure: self.structure, weights, offsets }))
    }

    fn theta_hat(&self) -> Option<DVector<f64>> {
        Some(self.theta.clone())
    }

    fn delta(&self) -> Option<Result<DMatrix<f64>>> {
        let q1 = self.data.q1();
        let q2 = self.structure.n_params();
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(self.dim());
        for (c, cl) in self.data.clusters().iter().zip(&self.clusters) {
            let a = &cl.inv * &cl.e;
            let sx = &cl.inv * &c.x;
            match self.perturbation {
                LmmPerturbation::Covariance => {
                    let mut v = DVector::zeros(q1 + q2);
                    v.rows_mut(0, q1).copy_from(&(c.x.transpose() * &a));
                    for k in 0..q2 {
                        v[q1 + k] = 0.5 * a.dot(&(&cl.d1[k] * &a));
                    }
                    cols.push(v);
                }
                LmmPerturbation::ClusterShift => {
                    let b = cl.inv.column_sum();
                    let mut v = DVector::zeros(q1 + q2);
                    v.rows_mut(0, q1).copy_from(&sx.row_sum().transpose());
                    for k in 0..q2 {
                        v[q1 + k] = a.dot(&(&cl.d1[k] * &b));
                    }
                    cols.push(v);
                }
                LmmPerturbation::MeanShift => {
                    let pa: Vec<DVector<f64>> = cl.d1.iter().map(|dk| &cl.inv * (dk * &a)).collect();
                    for j in 0..c.size() {
                        let mut v = DVector::zeros(q1 + q2);
                        v.rows_mut(0, q1).copy_from(&sx.row(j).transpose());
                        for (k, pk) in pa.iter().enumerate() {
                            v[q1 + k] = pk[j];
                        }
                        cols.push(v);
                    }
                }
            }
        }
        Some(Ok(DMatrix::from_columns(&cols)))
    }
}

fn build(fit: &ModelFit, perturbation: LmmPerturbation) -> Result<LmmSchemes> {
    let raw = PerturbedModel::from_scheme(LmmScheme::new(fit, perturbation)?);
    let delta = raw.delta().expect("mixed schemes have Δ")?;
    let appropriate = standardize(&raw, 1.0)?;
    Ok(LmmSchemes { raw, appropriate, delta })
}

/// Covariance-weight perturbation `Cov(y_i) = Σ_i / ω_i`.
pub fn lmm_covariance_scheme(fit: &ModelFit) -> Result<LmmSchemes> {
    build(fit, LmmPerturbation::Covariance)
}

/// Cluster mean shift `y_i + ω_i 1`.
pub fn lmm_cluster_shift_scheme(fit: &ModelFit) -> Result<LmmSchemes> {
    build(fit, LmmPerturbation::ClusterShift)
}

/// Observation mean shift `y_i + ω_i`.
pub fn lmm_mean_shift_scheme(fit: &ModelFit) -> Result<LmmSchemes> {
    build(fit, LmmPerturbation::MeanShift)
}
