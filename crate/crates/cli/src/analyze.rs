//! The four-step pipeline: fit, choose the perturbation, check the geometry
//! at the null point (rescaling if needed), then measure influence.

use std::sync::Arc;

use influence_core::geometry::{appropriateness_report_default, geometry_at, AppropriatenessVerdict};
use influence_core::models::{
    case_weight_scheme, explanatory_scheme, fit_model, ld_probe, lmm_cluster_shift_scheme, lmm_covariance_scheme,
    lmm_mean_shift_scheme, location_scale_scheme, loglik_ratio_probe, loglinear_scheme, rss_probe, standardize,
    ClusteredDataset, ExplanatoryForm, FitOptions, HessianForm, Interest, LocationScaleScheme, LoglinearBasis,
    LoglinearOptions, ModelFit, VarianceParametrization,
};
use influence_core::{influence_report, GeometryAtPoint, InfluenceReport, ObjectiveProbe, PerturbedModel};
use nalgebra::DVector;

use crate::config::{AnalysisConfig, Objective, Scheme};
use crate::error::{CliError, Result};
use crate::ingest::{as_independent, DatasetSummary};

/// How one perturbation index is labelled in the outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexLabel {
    pub component: Option<String>,
    pub cluster_id: Option<String>,
    pub obs_index: Option<String>,
}

/// The outcome of Steps 1–3 on the scheme as chosen.
pub struct Screened {
    pub summary: DatasetSummary,
    pub fit: ModelFit,
    pub raw: PerturbedModel,
    pub raw_geometry: GeometryAtPoint,
    pub raw_verdict: AppropriatenessVerdict,
    pub index: Vec<IndexLabel>,
}

pub struct Analysis {
    pub screened: Screened,
    /// The scheme the measures were computed on: `raw` or its rescaling.
    pub model: PerturbedModel,
    pub rescaled_verdict: Option<AppropriatenessVerdict>,
    pub geometry: GeometryAtPoint,
    pub probe: ObjectiveProbe,
    pub report: InfluenceReport,
}

impl Analysis {
    pub fn rescaled(&self) -> bool {
        self.rescaled_verdict.is_some()
    }
}

pub fn variance_parametrization(cfg: &AnalysisConfig) -> VarianceParametrization {
    cfg.k0.map_or(VarianceParametrization::InverseOmega, VarianceParametrization::InverseOmegaWithK0)
}

pub fn interest(objective: Objective) -> Option<Interest> {
    match objective {
        Objective::LdFull => Some(Interest::Full),
        Objective::LdBeta => Some(Interest::Beta),
        Objective::LdXi => Some(Interest::Dispersion),
        Objective::NegRss | Objective::LoglikRatio => None,
    }
}

/// Step 1.
pub fn fit(cfg: &AnalysisConfig, data: &ClusteredDataset) -> Result<ModelFit> {
    let data = if cfg.model.is_independent() { as_independent(data)? } else { data.clone() };
    let opts = FitOptions { xi_start: cfg.xi.as_ref().map(|xi| DVector::from_column_slice(xi)), ..Default::default() };
    Ok(fit_model(Arc::new(data), cfg.model, cfg.family, cfg.structure(), opts)?)
}

/// Step 2.
pub fn build_scheme(cfg: &AnalysisConfig, fit: &ModelFit) -> Result<PerturbedModel> {
    let scale = || cfg.scale.clone().unwrap_or_else(|| vec![1.0; fit.q1]);
    let model = match cfg.scheme {
        Scheme::CaseWeight => case_weight_scheme(fit)?,
        Scheme::LsVariance => location_scale_scheme(fit, LocationScaleScheme::Variance)?,
        Scheme::LsResponse => location_scale_scheme(fit, LocationScaleScheme::Response)?,
        Scheme::RegVariance => influence_core::models::regression_variance_scheme(fit, variance_parametrization(cfg))?,
        Scheme::ExplanatoryFull => explanatory_scheme(fit, ExplanatoryForm::Full, &scale())?,
        Scheme::ExplanatoryDiag => explanatory_scheme(fit, ExplanatoryForm::Diagonal, &scale())?,
        Scheme::Loglinear => {
            loglinear_scheme(fit, LoglinearBasis::hermite(cfg.basis_terms), LoglinearOptions::default())?
        }
        Scheme::LmmCov => lmm_covariance_scheme(fit)?.raw,
        Scheme::LmmClusterShift => lmm_cluster_shift_scheme(fit)?.raw,
        Scheme::LmmMeanShift => lmm_mean_shift_scheme(fit)?.raw,
    };
    Ok(model)
}

fn index_labels(scheme: Scheme, fit: &ModelFit, model: &PerturbedModel) -> Vec<IndexLabel> {
    let clusters = fit.data.clusters();
    let per_obs: Vec<IndexLabel> = clusters
        .iter()
        .flat_map(|c| {
            (0..c.size()).map(move |l| IndexLabel {
                component: None,
                cluster_id: Some(c.id.clone()),
                obs_index: Some(c.obs_label(l)),
            })
        })
        .collect();
    let labels = match scheme {
        Scheme::LmmCov | Scheme::LmmClusterShift => clusters
            .iter()
            .map(|c| IndexLabel { component: None, cluster_id: Some(c.id.clone()), obs_index: None })
            .collect(),
        Scheme::ExplanatoryFull => (1..=fit.q1)
            .flat_map(|k| per_obs.iter().map(move |l| IndexLabel { component: Some(format!("x{k}")), ..l.clone() }))
            .collect(),
        Scheme::Loglinear => Vec::new(),
        _ => per_obs,
    };
    if labels.len() == model.dim() {
        labels
    } else {
        model
            .labels()
            .into_iter()
            .map(|l| IndexLabel { component: Some(l), cluster_id: None, obs_index: None })
            .collect()
    }
}

/// Steps 1–3 without rescaling. Incompatible configurations are rejected
/// before the model is fitted.
pub fn screen(cfg: &AnalysisConfig, data: &ClusteredDataset) -> Result<Screened> {
    cfg.validate()?;
    let fit = fit(cfg, data)?;
    let raw = build_scheme(cfg, &fit)?;
    let raw_geometry = geometry_at(&raw, &raw.null_point(), cfg.alpha)?;
    let raw_verdict = appropriateness_report_default(&raw_geometry);
    let index = index_labels(cfg.scheme, &fit, &raw);
    Ok(Screened { summary: DatasetSummary::of(data), fit, raw, raw_geometry, raw_verdict, index })
}

pub fn objective_probe(cfg: &AnalysisConfig, fit: &ModelFit, model: &PerturbedModel) -> Result<ObjectiveProbe> {
    let probe = match cfg.objective {
        Objective::NegRss => model.pull_back_probe(&rss_probe(fit, variance_parametrization(cfg))?),
        Objective::LoglikRatio => loglik_ratio_probe(model)?,
        ld => ld_probe(fit, model, interest(ld).expect("LD objective"), HessianForm::Stored)?,
    };
    Ok(probe)
}

/// Step 4 on a screened analysis. A singular metric stops here.
pub fn finish(cfg: &AnalysisConfig, screened: Screened) -> Result<Analysis> {
    let v = &screened.raw_verdict;
    if v.singular {
        return Err(CliError::SingularScheme { rank: v.rank, p: screened.raw.dim() });
    }
    let (model, geometry, rescaled_verdict) = if cfg.auto_rescale && !v.is_appropriate {
        let model = standardize(&screened.raw, cfg.rescale_c)?;
        let geometry = geometry_at(&model, &model.null_point(), cfg.alpha)?;
        let verdict = appropriateness_report_default(&geometry);
        (model, geometry, Some(verdict))
    } else {
        (screened.raw.clone(), screened.raw_geometry.clone(), None)
    };
    let probe = objective_probe(cfg, &screened.fit, &model)?;
    let report = influence_report(&model, &probe, &geometry)?;
    Ok(Analysis { screened, model, rescaled_verdict, geometry, probe, report })
}

pub fn run(cfg: &AnalysisConfig, data: &ClusteredDataset) -> Result<Analysis> {
    finish(cfg, screen(cfg, data)?)
}
