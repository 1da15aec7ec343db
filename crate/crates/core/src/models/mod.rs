//! The model zoo: data, base-model fits, the perturbation schemes worked for
//! regression and mixed models, and objective probes.

pub mod covariance;
pub mod data;
pub mod density;
pub mod fit;
pub mod independent;
pub mod likelihoods;
pub mod lmm;
pub mod loglinear;
pub mod probes;
pub mod simulate;

pub use covariance::{CovarianceBlock, CovarianceStructure};
pub use data::{Cluster, ClusteredDataset};
pub use density::{BaseDensity, Component};
pub use fit::{fit_model, Family, FitOptions, ModelFit, ModelKind};
pub use independent::{
    case_weight_scheme, explanatory_scheme, location_scale_scheme, regression_variance_scheme, ExplanatoryForm,
    LocationScaleScheme, VarianceParametrization,
};
pub use lmm::{lmm_cluster_shift_scheme, lmm_covariance_scheme, lmm_mean_shift_scheme, LmmPerturbation, LmmSchemes};
pub use loglinear::{loglinear_scheme, LoglinearBasis, LoglinearOptions};
pub use probes::{
    ld_probe, ld_weight, likelihood_displacement, loglik_ratio_probe, neg_rss, rss_probe, HessianForm, Interest,
    RefitOptions,
};
pub use simulate::{simulate_clustered, SimulationConfig};

use crate::error::Result;
use crate::geometry::{geometry_at, rescale_perturbation, PerturbedModel};

/// The Eq.-(5)-style standardization of `model` so that `G = c I` at the
/// null point.
pub fn standardize(model: &PerturbedModel, c: f64) -> Result<PerturbedModel> {
    let geom = geometry_at(model, &model.null_point(), 0.0)?;
    rescale_perturbation(model, &geom, c)
}
