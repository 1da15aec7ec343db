//! Within-cluster covariance structures `Σ_i(ξ)` with analytic first and
//! second derivatives in ξ.

use nalgebra::{DMatrix, DVector};

use crate::error::{InfluenceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceStructure {
    /// `σ² I`, ξ = (σ²).
    ScaledIdentity,
    /// `σ² [(1 − ρ) I + ρ 1 1ᵀ]`, ξ = (σ², ρ).
    CompoundSymmetry,
    /// `Σ_jk = √(V(d_j) V(d_k)) ρ(|d_j − d_k|)` for `j ≠ k` and `V(d_j)` on the
    /// diagonal, with `V(d) = exp(ξ₀ + ξ₁d + ξ₂d² + ξ₃d³)` and
    /// `ρ(l) = ξ₄ + ξ₅ l`.
    VarianceAutocorrelation,
}

/// `Σ`, `∂Σ/∂ξ_k` and `∂²Σ/∂ξ_k∂ξ_l` for one cluster.
#[derive(Debug, Clone)]
pub struct CovarianceBlock {
    pub sigma: DMatrix<f64>,
    pub d1: Vec<DMatrix<f64>>,
    pub d2: Vec<Vec<DMatrix<f64>>>,
}

impl CovarianceStructure {
    pub fn n_params(&self) -> usize {
        match self {
            CovarianceStructure::ScaledIdentity => 1,
            CovarianceStructure::CompoundSymmetry => 2,
            CovarianceStructure::VarianceAutocorrelation => 6,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CovarianceStructure::ScaledIdentity => "scaled_identity",
            CovarianceStructure::CompoundSymmetry => "compound_symmetry",
            CovarianceStructure::VarianceAutocorrelation => "variance_autocorrelation",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "scaled_identity" => Some(CovarianceStructure::ScaledIdentity),
            "compound_symmetry" => Some(CovarianceStructure::CompoundSymmetry),
            "variance_autocorrelation" => Some(CovarianceStructure::VarianceAutocorrelation),
            _ => None,
        }
    }

    pub fn needs_covariate(&self) -> bool {
        matches!(self, CovarianceStructure::VarianceAutocorrelation)
    }

    /// A starting value given the residual variance of an OLS fit.
    pub fn default_start(&self, resid_var: f64) -> DVector<f64> {
        match self {
            CovarianceStructure::ScaledIdentity => DVector::from_vec(vec![resid_var]),
            CovarianceStructure::CompoundSymmetry => DVector::from_vec(vec![resid_var, 0.1]),
            CovarianceStructure::VarianceAutocorrelation => {
                DVector::from_vec(vec![resid_var.ln(), 0.0, 0.0, 0.0, 0.3, 0.0])
            }
        }
    }

    /// Builds the block; parameters giving a non-positive-definite `Σ` (or a
    /// correlation outside `(−1, 1)`) are an error, never clamped.
    pub fn build(&self, xi: &DVector<f64>, m: usize, d: Option<&DVector<f64>>) -> Result<CovarianceBlock> {
        if xi.len() != self.n_params() {
            return Err(InfluenceError::DimensionMismatch { expected: self.n_params(), got: xi.len() });
        }
        let q = self.n_params();
        let zero = DMatrix::zeros(m, m);
        let mut d2 = vec![vec![zero.clone(); q]; q];
        let block = match self {
            CovarianceStructure::ScaledIdentity => {
                if !(xi[0] > 0.0) {
                    return Err(InfluenceError::InvalidParameter(format!("σ² = {} must be positive", xi[0])));
                }
                let id = DMatrix::identity(m, m);
                CovarianceBlock { sigma: &id * xi[0], d1: vec![id], d2 }
            }
            CovarianceStructure::CompoundSymmetry => {
                let (s2, rho) = (xi[0], xi[1]);
                let lower = if m > 1 { -1.0 / (m as f64 - 1.0) } else { -1.0 };
                if !(s2 > 0.0) || !(rho > lower && rho < 1.0) {
                    return Err(InfluenceError::InvalidParameter(format!(
                        "compound symmetry needs σ² > 0 and {lower:.4} < ρ < 1, got ({s2}, {rho})"
                    )));
                }
                let id = DMatrix::<f64>::identity(m, m);
                let j_i = DMatrix::from_element(m, m, 1.0) - &id;
                let corr = &id + &j_i * rho;
                d2[0][1] = j_i.clone();
                d2[1][0] = j_i.clone();
                CovarianceBlock { sigma: &corr * s2, d1: vec![corr, &j_i * s2], d2 }
            }
            CovarianceStructure::VarianceAutocorrelation => {
                let d = d.ok_or_else(|| {
                    InfluenceError::InvalidParameter("variance_autocorrelation needs the covariate d".into())
                })?;
                let pw = |t: f64, a: usize| t.powi(a as i32);
                let v: Vec<f64> =
                    (0..m).map(|j| (xi[0] + xi[1] * d[j] + xi[2] * d[j] * d[j] + xi[3] * d[j].powi(3)).exp()).collect();
                let mut sigma = zero.clone();
                let mut d1 = vec![zero.clone(); q];
                for j in 0..m {
                    for k in 0..m {
                        let sv = (v[j] * v[k]).sqrt();
                        let lag = (d[j] - d[k]).abs();
                        let corr = if j == k {
                            1.0
                        } else {
                            let r = xi[4] + xi[5] * lag;
                            if !(r.abs() < 1.0) {
                                return Err(InfluenceError::InvalidParameter(format!(
                                    "autocorrelation ρ({lag:.4}) = {r:.4} is outside (−1, 1)"
                                )));
                            }
                            r
                        };
                        let s = sv * corr;
                        sigma[(j, k)] = s;
                        let e: Vec<f64> = (0..4).map(|a| 0.5 * (pw(d[j], a) + pw(d[k], a))).collect();
                        for a in 0..4 {
                            d1[a][(j, k)] = s * e[a];
                            for b in 0..4 {
                                d2[a][b][(j, k)] = s * e[a] * e[b];
                            }
                        }
                        if j != k {
                            d1[4][(j, k)] = sv;
                            d1[5][(j, k)] = sv * lag;
                            for a in 0..4 {
                                d2[a][4][(j, k)] = sv * e[a];
                                d2[4][a][(j, k)] = sv * e[a];
                                d2[a][5][(j, k)] = sv * lag * e[a];
                                d2[5][a][(j, k)] = sv * lag * e[a];
                            }
                        }
                    }
                }
                CovarianceBlock { sigma, d1, d2 }
            }
        };
        if block.sigma.clone().cholesky().is_none() {
            return Err(InfluenceError::InvalidParameter("Σ_i(ξ) is not positive definite".into()));
        }
        Ok(block)
    }
}
