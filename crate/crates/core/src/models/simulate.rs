//! Synthetic clustered data with a variance function of a visit-time
//! covariate, linear autocorrelation and optional outlying clusters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::covariance::CovarianceStructure;
use super::data::{Cluster, ClusteredDataset};
use crate::error::{InfluenceError, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub clusters: usize,
    pub min_m: usize,
    pub max_m: usize,
    /// 1-based index of a cluster whose errors are multiplied by `inflate`.
    pub outlier_cluster: Option<usize>,
    pub inflate: f64,
    pub seed: u64,
    /// Coefficients of `(1, d, group)`.
    pub beta: [f64; 3],
    /// Variance-function and autocorrelation parameters.
    pub xi: [f64; 6],
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            clusters: 30,
            min_m: 3,
            max_m: 12,
            outlier_cluster: None,
            inflate: 5.0,
            seed: 1,
            beta: [0.75, 0.3, 0.2],
            xi: [-0.5, 0.3, -0.2, 0.1, 0.6, -0.3],
        }
    }
}

/// Draws a dataset with design `x_ij = (1, d_ij, i mod 2)`, sorted visit
/// times `d_ij ~ U(0, 1)` and `Cov(y_i) = Σ_i(ξ)`.
pub fn simulate_clustered(cfg: &SimulationConfig) -> Result<ClusteredDataset> {
    if cfg.clusters == 0 || cfg.min_m == 0 || cfg.min_m > cfg.max_m {
        return Err(InfluenceError::InvalidParameter(format!(
            "need clusters ≥ 1 and 1 ≤ min_m ≤ max_m, got {} clusters with sizes {}..{}",
            cfg.clusters, cfg.min_m, cfg.max_m
        )));
    }
    if let Some(k) = cfg.outlier_cluster {
        if k == 0 || k > cfg.clusters {
            return Err(InfluenceError::InvalidParameter(format!("outlier cluster {k} is out of range")));
        }
    }
    if !(cfg.inflate > 0.0) {
        return Err(InfluenceError::InvalidParameter("inflation factor must be positive".into()));
    }
    let mut rng = stream(cfg.seed, 0);
    let xi = DVector::from_column_slice(&cfg.xi);
    let beta = DVector::from_column_slice(&cfg.beta);
    let mut out = Vec::with_capacity(cfg.clusters);
    for i in 0..cfg.clusters {
        let m = rng.random_range(cfg.min_m..=cfg.max_m);
        let mut d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        d.sort_by(f64::total_cmp);
        let d = DVector::from_vec(d);
        let group = (i % 2) as f64;
        let x = DMatrix::from_fn(m, 3, |j, k| match k {
            0 => 1.0,
            1 => d[j],
            _ => group,
        });
        let block = CovarianceStructure::VarianceAutocorrelation.build(&xi, m, Some(&d))?;
        let l = block.sigma.cholesky().expect("checked by the builder").l();
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let scale = if cfg.outlier_cluster == Some(i + 1) { cfg.inflate } else { 1.0 };
        let y = &x * &beta + l * z * scale;
        out.push(Cluster::new((i + 1).to_string(), y, x).with_d(d));
    }
    ClusteredDataset::new(out)
}
