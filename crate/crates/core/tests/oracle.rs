mod common;

use influence_core::geometry::{geometry_at, ComponentwiseDiffeo};
use influence_core::models::{
    case_weight_scheme, neg_rss, regression_variance_scheme, rss_probe, Family, ModelKind, VarianceParametrization,
};
use influence_core::oracle::{fd_probe, invariance_harness, mc_metric, random_diffeo, scale_harness, OracleConfig};
use influence_core::{InfluenceError, ObjectiveProbe, PerturbedModel, Result};
use nalgebra::{DMatrix, DVector};

use common::*;

const PARAM: VarianceParametrization = VarianceParametrization::InverseOmega;

fn directions(p: usize, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| DVector::from_vec(normals(500 + k as u64, p)))
        .chain((0..p).map(|i| DVector::from_fn(p, |j, _| if i == j { 1.0 } else { 0.0 })))
        .collect()
}

#[test]
fn mc_metric_case_weight_and_variance_examples() {
    let fit = known_fit(ModelKind::IidParametric, Family::Gaussian, normals(5, 5), vec![0.0, 1.0]);
    let model = case_weight_scheme(&fit).unwrap();
    let cfg = OracleConfig { mc_draws: 50_000, ..OracleConfig::new(9) };
    let mc = mc_metric(&model, &model.null_point(), &cfg).unwrap();
    let (z, _) = mc.z_scores(&(DMatrix::identity(5, 5) * 0.5));
    assert!(z <= sidak_z(15));

    let reg = regression_variance_scheme(&regression_fit(), PARAM).unwrap();
    let mut at = reg.null_point();
    at[0] = 2.0;
    let mc = mc_metric(&reg, &at, &cfg).unwrap();
    assert!((mc.g[(0, 0)] - 0.125).abs() <= 3.0 * mc.stderr[(0, 0)]);
}

#[test]
fn mc_standard_errors_shrink_with_draws() {
    let reg = regression_variance_scheme(&regression_fit(), PARAM).unwrap();
    let w0 = reg.null_point();
    let small = mc_metric(&reg, &w0, &OracleConfig { mc_draws: 20_000, ..OracleConfig::new(3) }).unwrap();
    let large = mc_metric(&reg, &w0, &OracleConfig { mc_draws: 40_000, ..OracleConfig::new(3) }).unwrap();
    for i in 0..10 {
        let ratio = large.stderr[(i, i)] / small.stderr[(i, i)];
        assert!((ratio * 2f64.sqrt() - 1.0).abs() < 0.2, "stderr ratio {ratio}");
    }
}

#[test]
fn mc_metric_is_bit_reproducible() {
    let reg = regression_variance_scheme(&regression_fit(), PARAM).unwrap();
    let cfg = OracleConfig { mc_draws: 10_000, ..OracleConfig::new(77) };
    let a = mc_metric(&reg, &reg.null_point(), &cfg).unwrap();
    let b = mc_metric(&reg, &reg.null_point(), &cfg).unwrap();
    assert_eq!(a.g, b.g);
    assert_eq!(a.stderr, b.stderr);
    let c = mc_metric(&reg, &reg.null_point(), &OracleConfig { seed: 78, ..cfg }).unwrap();
    assert_ne!(a.g, c.g);
}

#[test]
fn fd_probe_reproduces_the_rss_closed_form() {
    let fit = regression_fit();
    let f = |w: &DVector<f64>| neg_rss(&fit, PARAM, w);
    let fd = fd_probe(&f, &DVector::from_element(10, 1.0), &OracleConfig::new(1)).unwrap();
    let closed = rss_probe(&fit, PARAM).unwrap();
    assert!((fd.grad - closed.grad).amax() < 1e-5);
    assert!((fd.hess - closed.hess).amax() < 1e-5);
}

#[test]
fn pulled_back_probe_matches_finite_differences_in_the_chart() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let diffeo = random_diffeo(&model.null_point(), 4, 0);
    let reparam = model.with_chart(std::sync::Arc::new(diffeo)).unwrap();
    let pulled = reparam.pull_back_probe(&rss_probe(&fit, PARAM).unwrap());
    let f = |phi: &DVector<f64>| neg_rss(&fit, PARAM, &reparam.to_base(phi));
    let fd = fd_probe(&f, &reparam.null_point(), &OracleConfig::new(1)).unwrap();
    assert!((pulled.grad - fd.grad).amax() < 1e-5);
    assert!(max_rel(&pulled.hess, &fd.hess) < 1e-5);
}

fn rss_builder(fit: &influence_core::models::ModelFit) -> impl Fn(&PerturbedModel) -> Result<ObjectiveProbe> + '_ {
    move |m: &PerturbedModel| Ok(m.pull_back_probe(&rss_probe(fit, PARAM)?))
}

#[test]
fn invariance_harness_identity_affine_and_cubic() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geometry_at(&model, &model.null_point(), 0.0).unwrap();
    let builder = rss_builder(&fit);
    let dirs = directions(10, 10);
    let w0 = model.null_point();

    let id = invariance_harness(&model, &builder, &geom, &ComponentwiseDiffeo::identity(w0.clone()), &dirs).unwrap();
    assert_eq!(id.max_deviation(), 0.0);

    let a: Vec<f64> = (0..10).map(|i| 0.5 + 0.15 * i as f64).collect();
    let affine = ComponentwiseDiffeo::new(w0.clone(), a, vec![0.0; 10], vec![0.0; 10]).unwrap();
    assert!(invariance_harness(&model, &builder, &geom, &affine, &dirs).unwrap().max_deviation() < 1e-8);

    for k in 0..5 {
        let cubic = random_diffeo(&w0, 21, k);
        let rec = invariance_harness(&model, &builder, &geom, &cubic, &dirs).unwrap();
        assert!(rec.max_deviation() < 1e-6, "diffeo {k}: {}", rec.max_deviation());
        // The Euclidean curvature is chart dependent.
        let moved = rec.rows.iter().map(|r| (r.curvature.0 - r.curvature.1).abs()).fold(0.0, f64::max);
        assert!(moved > 1e-3);
    }
}

#[test]
fn invariance_harness_rejects_bad_inputs() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geometry_at(&model, &model.null_point(), 0.0).unwrap();
    let builder = rss_builder(&fit);
    let shifted = ComponentwiseDiffeo::identity(DVector::from_element(10, 2.0));
    assert!(matches!(
        invariance_harness(&model, &builder, &geom, &shifted, &[]),
        Err(InfluenceError::InvalidParameter(_))
    ));
    let mut bent = ComponentwiseDiffeo::identity(model.null_point());
    bent.c[0] = 5.0;
    bent.b[0] = 0.1;
    assert!(matches!(
        invariance_harness(&model, &builder, &geom, &bent, &[]),
        Err(InfluenceError::NonMonotoneDiffeo(_))
    ));
}

#[test]
fn normal_curvature_is_not_scale_invariant() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geometry_at(&model, &model.null_point(), 0.0).unwrap();
    let probe = rss_probe(&fit, PARAM).unwrap();
    for h in directions(10, 10) {
        let rec = scale_harness(&probe, &geom, &h, 10.0).unwrap();
        assert!((rec.fi_ratio - 1.0).abs() < 1e-12);
        assert!((rec.si_ratio - 1.0).abs() < 1e-12);
        assert!((rec.ssi_ratio - 1.0).abs() < 1e-12);
        assert!(rec.curvature_deviation > 0.1, "{}", rec.curvature_deviation);
    }
    assert!(scale_harness(&probe, &geom, &DVector::from_element(10, 1.0), -1.0).is_err());
}
