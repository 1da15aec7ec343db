//! `L(θ | ω)` for the built-in models with every perturbation channel the
//! schemes need, plus analytic scores and Hessians.

use std::ops::AddAssign;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::covariance::{CovarianceBlock, CovarianceStructure};
use super::data::ClusteredDataset;
use super::density::BaseDensity;
use crate::likelihood::ThetaLikelihood;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Independent location-scale observations with `θ = (β, σ²)`:
///
/// `ℓ_i = log τ_i − ½ log σ² + κ_i ℓ₀(z_i)`, `z_i = τ_i (y_i + o_i − x̃_iᵀβ) / σ`.
///
/// `κ` is a case weight (with its θ-free normalizer dropped), `τ` a precision
/// multiplier, `o` a response shift and `x̃` a perturbed design.
#[derive(Debug, Clone)]
pub struct IndepLikelihood {
    pub base: BaseDensity,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub kappa: DVector<f64>,
    pub tau: DVector<f64>,
    pub offset: DVector<f64>,
}

impl IndepLikelihood {
    pub fn unperturbed(base: BaseDensity, y: DVector<f64>, x: DMatrix<f64>) -> Self {
        let n = y.len();
        Self {
            base,
            y,
            x,
            kappa: DVector::from_element(n, 1.0),
            tau: DVector::from_element(n, 1.0),
            offset: DVector::zeros(n),
        }
    }

    fn q1(&self) -> usize {
        self.x.ncols()
    }

    fn split(&self, theta: &DVector<f64>) -> Option<(DVector<f64>, f64)> {
        let q1 = self.q1();
        let s = theta[q1];
        (s > 0.0 && s.is_finite()).then(|| (theta.rows(0, q1).into_owned(), s))
    }

    fn z(&self, i: usize, beta: &DVector<f64>, sigma: f64) -> f64 {
        let mu = self.x.row(i).transpose().dot(beta);
        self.tau[i] * (self.y[i] + self.offset[i] - mu) / sigma
    }
}

impl ThetaLikelihood for IndepLikelihood {
    fn dim(&self) -> usize {
        self.q1() + 1
    }

    fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        let (beta, s) = self.split(theta)?;
        let sigma = s.sqrt();
        let v: f64 = (0..self.y.len())
            .map(|i| self.tau[i].ln() - 0.5 * s.ln() + self.kappa[i] * self.base.log_pdf(self.z(i, &beta, sigma)))
            .sum();
        v.is_finite().then_some(v)
    }

    fn score(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (beta, s) = self.split(theta)?;
        let sigma = s.sqrt();
        let q1 = self.q1();
        let mut g = DVector::zeros(q1 + 1);
        for i in 0..self.y.len() {
            let z = self.z(i, &beta, sigma);
            let (k, t, d1) = (self.kappa[i], self.tau[i], self.base.score(z));
            for j in 0..q1 {
                g[j] -= k * d1 * t * self.x[(i, j)] / sigma;
            }
            g[q1] += -0.5 / s - k * d1 * z / (2.0 * s);
        }
        Some(g)
    }

    fn hessian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let (beta, s) = self.split(theta)?;
        let sigma = s.sqrt();
        let q1 = self.q1();
        let mut h = DMatrix::zeros(q1 + 1, q1 + 1);
        for i in 0..self.y.len() {
            let z = self.z(i, &beta, sigma);
            let (k, t) = (self.kappa[i], self.tau[i]);
            let (d1, d2) = (self.base.score(z), self.base.score_deriv(z));
            let x = self.x.row(i);
            for a in 0..q1 {
                for b in 0..q1 {
                    h[(a, b)] += k * d2 * t * t * x[a] * x[b] / s;
                }
                let cross = k * t * x[a] * (d2 * z + d1) / (2.0 * s * sigma);
                h[(a, q1)] += cross;
                h[(q1, a)] += cross;
            }
            h[(q1, q1)] += 0.5 / (s * s) + k * z * (d2 * z + d1) / (4.0 * s * s) + k * d1 * z / (2.0 * s * s);
        }
        Some(h)
    }
}

/// Per-unit mixed derivatives `∂(∂ℓ_i/∂θ)/∂channel` of [`IndepLikelihood`]
/// at the null channel values `κ = τ = 1`, `o = 0`, `x̃ = x`.
#[derive(Debug, Clone)]
pub struct IndepChannels {
    pub base: BaseDensity,
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

impl IndepChannels {
    fn parts(&self, z: f64) -> (f64, f64, f64) {
        (self.sigma2.sqrt(), self.base.score(z), self.base.score_deriv(z))
    }

    pub fn kappa(&self, x: &DVector<f64>, z: f64) -> DVector<f64> {
        let (sigma, d1, _) = self.parts(z);
        let mut v: Vec<f64> = x.iter().map(|xj| -d1 * xj / sigma).collect();
        v.push(-d1 * z / (2.0 * self.sigma2));
        DVector::from_vec(v)
    }

    pub fn tau(&self, x: &DVector<f64>, z: f64) -> DVector<f64> {
        let (sigma, d1, d2) = self.parts(z);
        let m = d2 * z + d1;
        let mut v: Vec<f64> = x.iter().map(|xj| -xj * m / sigma).collect();
        v.push(-z * m / (2.0 * self.sigma2));
        DVector::from_vec(v)
    }

    pub fn offset(&self, x: &DVector<f64>, z: f64) -> DVector<f64> {
        let (sigma, d1, d2) = self.parts(z);
        let mut v: Vec<f64> = x.iter().map(|xj| -d2 * xj / self.sigma2).collect();
        v.push(-(d2 * z + d1) / (2.0 * self.sigma2 * sigma));
        DVector::from_vec(v)
    }

    /// Channel `x̃_ik` for design column `k`.
    pub fn design(&self, x: &DVector<f64>, z: f64, k: usize) -> DVector<f64> {
        let (sigma, d1, d2) = self.parts(z);
        let bk = self.beta[k];
        let mut v: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, xj)| d2 * bk * xj / self.sigma2 - if j == k { d1 / sigma } else { 0.0 })
            .collect();
        v.push((d2 * z + d1) * bk / (2.0 * self.sigma2 * sigma));
        DVector::from_vec(v)
    }
}

/// Exponential observations with rate `λ` under case weights:
/// `ℓ_i = log λ − κ_i λ y_i` (θ-free normalizer terms dropped).
#[derive(Debug, Clone)]
pub struct ExponentialLikelihood {
    pub y: DVector<f64>,
    pub kappa: DVector<f64>,
}

impl ThetaLikelihood for ExponentialLikelihood {
    fn dim(&self) -> usize {
        1
    }

    fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        let l = theta[0];
        (l > 0.0).then(|| self.y.len() as f64 * l.ln() - l * self.kappa.dot(&self.y))
    }

    fn score(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let l = theta[0];
        (l > 0.0).then(|| DVector::from_element(1, self.y.len() as f64 / l - self.kappa.dot(&self.y)))
    }

    fn hessian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let l = theta[0];
        (l > 0.0).then(|| DMatrix::from_element(1, 1, -(self.y.len() as f64) / (l * l)))
    }
}

/// Gaussian linear mixed model with `θ = (β, ξ)`, per-cluster precision
/// weights `w_i` (`Cov(y_i) = Σ_i / w_i`) and response shifts `o_i`:
///
/// `ℓ_i = −½ m_i log 2π − ½ log|Σ_i| + ½ m_i log w_i − ½ w_i e_iᵀΣ_i⁻¹e_i`,
/// `e_i = y_i + o_i − x_iβ`.
#[derive(Debug, Clone)]
pub struct LmmLikelihood {
    pub data: Arc<ClusteredDataset>,
    pub structure: CovarianceStructure,
    pub weights: Vec<f64>,
    pub offsets: Vec<DVector<f64>>,
}

/// Per-cluster quantities at one θ.
pub(crate) struct ClusterTerms {
    pub block: CovarianceBlock,
    pub inv: DMatrix<f64>,
    pub logdet: f64,
    pub e: DVector<f64>,
}

pub(crate) fn cluster_terms(
    structure: CovarianceStructure,
    xi: &DVector<f64>,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    d: Option<&DVector<f64>>,
    beta: &DVector<f64>,
) -> Option<ClusterTerms> {
    let block = structure.build(xi, y.len(), d).ok()?;
    let chol = block.sigma.clone().cholesky()?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let inv = chol.inverse();
    let e = y - x * beta;
    Some(ClusterTerms { block, inv, logdet, e })
}

impl LmmLikelihood {
    pub fn unperturbed(data: Arc<ClusteredDataset>, structure: CovarianceStructure) -> Self {
        let n = data.n();
        let offsets = data.clusters().iter().map(|c| DVector::zeros(c.size())).collect();
        Self { data, structure, weights: vec![1.0; n], offsets }
    }

    fn q1(&self) -> usize {
        self.data.q1()
    }

    fn terms(&self, theta: &DVector<f64>) -> Option<Vec<ClusterTerms>> {
        let q1 = self.q1();
        let beta = theta.rows(0, q1).into_owned();
        let xi = theta.rows(q1, self.structure.n_params()).into_owned();
        self.data
            .clusters()
            .iter()
            .zip(&self.offsets)
            .map(|(c, o)| cluster_terms(self.structure, &xi, &c.x, &(&c.y + o), c.d.as_ref(), &beta))
            .collect()
    }

    /// The block approximation to `−L̈`: `diag(Σ xᵀΣ⁻¹x, ½ Σ tr(Σ⁻¹Σ_kΣ⁻¹Σ_l))`.
    pub fn block_information(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let q1 = self.q1();
        let q2 = self.structure.n_params();
        let mut m = DMatrix::zeros(q1 + q2, q1 + q2);
        for ((c, t), &w) in self.data.clusters().iter().zip(self.terms(theta)?).zip(&self.weights) {
            let xtx = c.x.transpose() * &t.inv * &c.x * w;
            m.view_mut((0, 0), (q1, q1)).add_assign(&xtx);
            let p: Vec<DMatrix<f64>> = t.block.d1.iter().map(|dk| &t.inv * dk).collect();
            for k in 0..q2 {
                for l in 0..q2 {
                    m[(q1 + k, q1 + l)] += 0.5 * (&p[k] * &p[l]).trace();
                }
            }
        }
        Some(m)
    }
}

impl ThetaLikelihood for LmmLikelihood {
    fn dim(&self) -> usize {
        self.q1() + self.structure.n_params()
    }

    fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        let terms = self.terms(theta)?;
        let v: f64 = terms
            .iter()
            .zip(&self.weights)
            .map(|(t, &w)| {
                let m = t.e.len() as f64;
                -0.5 * m * LN_2PI - 0.5 * t.logdet + 0.5 * m * w.ln() - 0.5 * w * t.e.dot(&(&t.inv * &t.e))
            })
            .sum();
        v.is_finite().then_some(v)
    }

    fn score(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let q1 = self.q1();
        let q2 = self.structure.n_params();
        let mut g = DVector::zeros(q1 + q2);
        for ((c, t), &w) in self.data.clusters().iter().zip(self.terms(theta)?).zip(&self.weights) {
            let a = &t.inv * &t.e;
            g.rows_mut(0, q1).add_assign(&(c.x.transpose() * &a * w));
            for k in 0..q2 {
                let dk = &t.block.d1[k];
                g[q1 + k] += -0.5 * (&t.inv * dk).trace() + 0.5 * w * a.dot(&(dk * &a));
            }
        }
        Some(g)
    }

    fn hessian(&self, theta: &DVector<f64>) -> Option<DMatrix<f64>> {
        let q1 = self.q1();
        let q2 = self.structure.n_params();
        let mut h = DMatrix::zeros(q1 + q2, q1 + q2);
        for ((c, t), &w) in self.data.clusters().iter().zip(self.terms(theta)?).zip(&self.weights) {
            let a = &t.inv * &t.e;
            let six = &t.inv * &c.x;
            h.view_mut((0, 0), (q1, q1)).add_assign(&(c.x.transpose() * &six * (-w)));
            let p: Vec<DMatrix<f64>> = t.block.d1.iter().map(|dk| &t.inv * dk).collect();
            let pa: Vec<DVector<f64>> = p.iter().map(|pk| pk * &a).collect();
            for k in 0..q2 {
                let cross = c.x.transpose() * &pa[k] * (-w);
                for j in 0..q1 {
                    h[(j, q1 + k)] += cross[j];
                    h[(q1 + k, j)] += cross[j];
                }
                for l in 0..q2 {
                    let dkl = &t.block.d2[k][l];
                    h[(q1 + k, q1 + l)] += 0.5 * (&p[l] * &p[k]).trace()
                        - 0.5 * (&t.inv * dkl).trace()
                        - w * (&t.block.d1[l] * &pa[k]).dot(&a)
                        + 0.5 * w * a.dot(&(dkl * &a));
                }
            }
        }
        Some(h)
    }
}
