//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stderr, so the lines appear even when output is captured.

mod common;

use std::io::Write;
use std::sync::Arc;

use influence_cli::analyze;
use influence_cli::config::{AnalysisConfig, Scheme};
use influence_core::geometry::{
    appropriateness_report_default, geodesic_trace, geometry_at, rescale_perturbation, SampledPath,
};
use influence_core::measures::{
    covariant_hessian, eigen_influence, fi_maximizer, first_order_influence, normal_curvature, second_order_influence,
    standardized_si,
};
use influence_core::models::{
    case_weight_scheme, explanatory_scheme, fit_model, ld_probe, likelihood_displacement, lmm_cluster_shift_scheme,
    lmm_covariance_scheme, lmm_mean_shift_scheme, location_scale_scheme, loglik_ratio_probe, loglinear_scheme, neg_rss,
    regression_variance_scheme, rss_probe, simulate_clustered, standardize, Cluster, ClusteredDataset,
    CovarianceStructure, ExplanatoryForm, Family, FitOptions, HessianForm, Interest, LocationScaleScheme,
    LoglinearBasis, LoglinearOptions, ModelFit, ModelKind, RefitOptions, SimulationConfig, VarianceParametrization,
};
use influence_core::oracle::{
    fd_probe, geodesic_residual, invariance_harness, mc_metric, random_diffeo, relative_deviation, scale_harness,
    sidak_z, OracleConfig,
};
use influence_core::rng::stream;
use influence_core::{GeometryAtPoint, PerturbedModel};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use common::{run, wiggle, write};

const PARAM: VarianceParametrization = VarianceParametrization::InverseOmega;

fn verdict(n: u32, title: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {}: {title} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {title} ({detail})");
}

fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn iid_data(y: Vec<f64>) -> ClusteredDataset {
    let n = y.len();
    ClusteredDataset::from_rows(DVector::from_vec(y), DMatrix::from_element(n, 1, 1.0)).unwrap()
}

/// Ten rows, intercept plus two standard normal covariates.
fn regression_fit() -> ModelFit {
    let z = normals(1010, 30);
    let x = DMatrix::from_fn(10, 3, |i, k| if k == 0 { 1.0 } else { z[10 * k + i] });
    let y = &x * DVector::from_vec(vec![1.0, 2.0, -1.0]) + DVector::from_fn(10, |i, _| 0.7 * z[i]);
    let data = ClusteredDataset::from_rows(y, x).unwrap();
    fit_model(Arc::new(data), ModelKind::LinearRegression, Family::Gaussian, None, FitOptions::default()).unwrap()
}

/// Compound-symmetry clusters of sizes 4, 5 and 10 with design `(1, d)`.
fn lmm3() -> ModelFit {
    let structure = CovarianceStructure::CompoundSymmetry;
    let xi = DVector::from_vec(vec![1.0, 0.6]);
    let mut rng = stream(2, 0);
    let clusters = [4usize, 5, 10]
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let mut d: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            d.sort_by(f64::total_cmp);
            let d = DVector::from_vec(d);
            let x = DMatrix::from_fn(m, 2, |j, k| if k == 0 { 1.0 } else { d[j] });
            let l = structure.build(&xi, m, Some(&d)).unwrap().sigma.cholesky().unwrap().l();
            let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
            let y = &x * DVector::from_vec(vec![0.5, 1.0]) + l * z;
            Cluster::new((i + 1).to_string(), y, x).with_d(d)
        })
        .collect();
    let data = ClusteredDataset::new(clusters).unwrap();
    fit_model(Arc::new(data), ModelKind::LinearMixed, Family::Gaussian, Some(structure), FitOptions::default()).unwrap()
}

fn geo0(model: &PerturbedModel) -> GeometryAtPoint {
    geometry_at(model, &model.null_point(), 0.0).unwrap()
}

fn hat_and_residuals(fit: &ModelFit) -> (DMatrix<f64>, DVector<f64>) {
    let x = fit.data.stacked_x();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let p = &x * inv * x.transpose();
    let r = fit.data.stacked_y() - &p * fit.data.stacked_y();
    (p, r)
}

fn max_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / a.amax().max(b.amax()).max(f64::MIN_POSITIVE)
}

fn directions(p: usize, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| DVector::from_vec(normals(500 + k as u64, p)))
        .chain((0..p).map(|i| DVector::from_fn(p, |j, _| if i == j { 1.0 } else { 0.0 })))
        .collect()
}

#[test]
fn criterion_01_metric_matches_monte_carlo() {
    let cw = fit_model(
        Arc::new(iid_data(normals(20, 20))),
        ModelKind::IidParametric,
        Family::Gaussian,
        None,
        FitOptions::default(),
    )
    .unwrap();
    let lmm = lmm3();
    let models = [
        case_weight_scheme(&cw).unwrap(),
        regression_variance_scheme(&regression_fit(), PARAM).unwrap(),
        lmm_covariance_scheme(&lmm).unwrap().raw,
    ];
    let cfg = OracleConfig { mc_draws: 200_000, ..OracleConfig::new(2024) };
    let mut pass = true;
    let mut parts = Vec::new();
    for m in &models {
        let g = geo0(m).g;
        let mc = mc_metric(m, &m.null_point(), &cfg).unwrap();
        let (z, exact) = mc.z_scores(&g);
        let p = g.nrows();
        let bound = sidak_z(p * (p + 1) / 2, 3.0);
        pass &= z <= bound && exact <= 1e-8 * g.amax();
        parts.push(format!("{} max|z| {z:.2} ≤ {bound:.2}", m.name()));
    }
    let g = geo0(&models[2]).g;
    let exact = g == DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.5, 5.0]));
    pass &= exact;
    parts.push(format!("lmm G = diag(0.5 m) exactly: {exact}"));
    verdict(1, "closed-form G(ω⁰) vs Monte Carlo at 2e5 draws", pass, &parts.join("; "));
}

#[test]
fn criterion_02_rescaling_makes_schemes_appropriate() {
    let reg = regression_fit();
    let lmm = lmm3();
    let iid = fit_model(
        Arc::new(iid_data(normals(8, 50))),
        ModelKind::IidParametric,
        Family::Gaussian,
        None,
        FitOptions::default(),
    )
    .unwrap();
    let models = vec![
        regression_variance_scheme(&reg, VarianceParametrization::InverseOmegaWithK0(2.0)).unwrap(),
        lmm_covariance_scheme(&lmm).unwrap().raw,
        lmm_cluster_shift_scheme(&lmm).unwrap().raw,
        lmm_mean_shift_scheme(&lmm).unwrap().raw,
        loglinear_scheme(&iid, LoglinearBasis::hermite(2), LoglinearOptions::default()).unwrap(),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for m in &models {
        let g = geo0(m);
        let before = appropriateness_report_default(&g).is_appropriate;
        for c in [1.0, 0.5] {
            let re = rescale_perturbation(m, &g, c).unwrap();
            let gr = geo0(&re);
            let dev = (&gr.g - DMatrix::identity(m.dim(), m.dim()) * c).amax();
            let after = appropriateness_report_default(&gr).is_appropriate;
            pass &= !before && after && dev <= 1e-10;
            parts.push(format!("{} c={c}: {before}→{after}, |G−cI| {dev:.1e}", m.name()));
        }
    }
    verdict(2, "rescaling gives G = cI and flips the verdict", pass, &parts.join("; "));
}

#[test]
fn criterion_03_invariance_and_curvature_non_invariance() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geo0(&model);
    let builder = |m: &PerturbedModel| Ok(m.pull_back_probe(&rss_probe(&fit, PARAM)?));
    let dirs = directions(10, 10);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let diffeo = random_diffeo(&model.null_point(), 2718, k);
        worst = worst.max(invariance_harness(&model, &builder, &geom, &diffeo, &dirs).unwrap().max_deviation());
    }
    let probe = rss_probe(&fit, PARAM).unwrap();
    let least = dirs
        .iter()
        .map(|h| scale_harness(&probe, &geom, h, 10.0).unwrap().curvature_deviation)
        .fold(f64::INFINITY, f64::min);
    verdict(
        3,
        "FI/SI/SSI invariant under 100 cubic reparametrizations; C_h moves under 10f",
        worst < 1e-6 && least > 0.1,
        &format!("max rel deviation {worst:.2e} < 1e-6; min C_h change {least:.3} > 0.1"),
    );
}

#[test]
fn criterion_04_scaling_laws() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geo0(&model);
    let probe = rss_probe(&fit, PARAM).unwrap();
    let ht = covariant_hessian(&probe, &geom).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [-3.0, 0.5, 10.0] {
        let scaled = probe.scaled(k);
        let htk = covariant_hessian(&scaled, &geom).unwrap();
        let (mut dfi, mut dsi, mut dssi) = (0.0f64, 0.0f64, 0.0f64);
        for h in directions(10, 20) {
            let fi = first_order_influence(&probe, &geom.g, &h).unwrap();
            let fik = first_order_influence(&scaled, &geom.g, &h).unwrap();
            let si = second_order_influence(&ht, &geom.g, &h).unwrap();
            let sik = second_order_influence(&htk, &geom.g, &h).unwrap();
            let ssi = standardized_si(&ht, &geom.g, &h).unwrap();
            let ssik = standardized_si(&htk, &geom.g, &h).unwrap();
            dfi = dfi.max(relative_deviation(fik, k * k * fi));
            dsi = dsi.max(relative_deviation(sik, k * si));
            dssi = dssi.max(relative_deviation(ssik, ssi));
        }
        pass &= dfi <= 1e-12 && dsi <= 1e-12 && dssi <= 1e-12;
        parts.push(format!("k={k}: FI {dfi:.1e}, SI {dsi:.1e}, SSI {dssi:.1e}"));
    }
    verdict(4, "FI_kf = k²FI, SI_kf = kSI, SSI_kf = SSI within 1e-12", pass, &parts.join("; "));
}

#[test]
fn criterion_05_location_scale_curvature_is_scaled_si() {
    let fit = fit_model(
        Arc::new(iid_data(normals(44, 15))),
        ModelKind::LocationScale,
        Family::Gaussian,
        None,
        FitOptions::default(),
    )
    .unwrap();
    let s2 = fit.sigma2().unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (which, c) in [
        (LocationScaleScheme::CaseWeight, 0.5),
        (LocationScaleScheme::Variance, 2.0),
        (LocationScaleScheme::Response, 1.0 / s2),
    ] {
        let model = location_scale_scheme(&fit, which).unwrap();
        let geom = geo0(&model);
        let gdev = (&geom.g - DMatrix::identity(15, 15) * c).amax() / c;
        let probe = ld_probe(&fit, &model, Interest::Full, HessianForm::Stored).unwrap();
        let ht = covariant_hessian(&probe, &geom).unwrap();
        let worst = (0..50)
            .map(|k| {
                let h = DVector::from_vec(normals(1000 + k, 15));
                let ch = normal_curvature(&probe, &h).unwrap();
                let si = second_order_influence(&ht, &geom.g, &h).unwrap();
                (ch - c * si).abs() / ch.abs().max(1.0)
            })
            .fold(0.0, f64::max);
        pass &= gdev <= 1e-10 && worst <= 1e-8;
        parts.push(format!("{} c={c:.4}: |G−cI|/c {gdev:.1e}, |C−c·SI| {worst:.1e}", model.name()));
    }
    verdict(5, "location-scale schemes have G = cI and C_h = c·SI_LD", pass, &parts.join("; "));
}

#[test]
fn criterion_06_rss_closed_forms() {
    let fit = regression_fit();
    let model = regression_variance_scheme(&fit, PARAM).unwrap();
    let geom = geo0(&model);
    let (pm, r) = hat_and_residuals(&fit);
    let dr = DMatrix::from_diagonal(&r);
    let r2 = r.map(|v| v * v);
    let expected = &dr * &pm * &dr * 2.0 - DMatrix::from_diagonal(&r2);

    let f = |w: &DVector<f64>| neg_rss(&fit, PARAM, w);
    let fd = fd_probe(&f, &model.null_point(), &OracleConfig::new(1)).unwrap();
    let ht_dev = (covariant_hessian(&fd, &geom).unwrap() - &expected).amax();

    // Brute force: SI along E_i is e_iᵀH̃e_i / e_iᵀGe_i with H̃ assembled from the
    // hat matrix and g_ii = 1/2.
    let report = influence_core::influence_report(&model, &rss_probe(&fit, PARAM).unwrap(), &geom).unwrap();
    let si_dev = (0..10)
        .map(|i| {
            let brute = expected[(i, i)] / 0.5;
            let formula = 2.0 * r2[i] * (2.0 * pm[(i, i)] - 1.0);
            let a = relative_deviation(report.basis_si[i], brute);
            a.max(relative_deviation(formula, brute))
        })
        .fold(0.0, f64::max);
    let lawrance = &r2 / r2.norm();
    let h_dev = (report.h_max.clone().unwrap() - lawrance).amax();
    verdict(
        6,
        "−RSS covariant Hessian, SI_{E_i} and h_max",
        ht_dev <= 1e-5 && si_dev <= 1e-8 && h_dev <= 1e-10,
        &format!("|H̃_fd − H̃| {ht_dev:.1e} ≤ 1e-5; SI rel {si_dev:.1e} ≤ 1e-8; |h_max − r²/‖r²‖| {h_dev:.1e}"),
    );
}

#[test]
fn criterion_07_score_statistic() {
    let y = normals(200, 200);
    let fit = ModelFit::with_known_theta(
        ModelKind::IidParametric,
        Family::Gaussian,
        Arc::new(iid_data(y.clone())),
        DVector::from_vec(vec![0.0, 1.0]),
        None,
    )
    .unwrap();
    let raw = loglinear_scheme(&fit, LoglinearBasis::hermite(2), LoglinearOptions::default()).unwrap();
    let model = standardize(&raw, 1.0).unwrap();
    let geom = geo0(&model);
    let probe = loglik_ratio_probe(&model).unwrap();
    let fi = fi_maximizer(&probe, &geom.g).unwrap().fi_max;
    let n = y.len() as f64;
    let m1 = y.iter().sum::<f64>() / n;
    let m2 = y.iter().map(|v| v * v - 1.0).sum::<f64>() / n;
    let stat = n * m1 * m1 / 1.0 + n * m2 * m2 / 2.0;
    let dev = relative_deviation(fi, stat);
    verdict(
        7,
        "standardized log-linear FI_max is the score statistic",
        dev <= 1e-10,
        &format!("{fi:.10} vs {stat:.10}, rel {dev:.1e}"),
    );
}

#[test]
fn criterion_08_geodesics() {
    let fit = regression_fit();
    let cfg = OracleConfig::new(5);
    let var = regression_variance_scheme(&fit, PARAM).unwrap();
    let h = DVector::from_fn(10, |i, _| -1.0 + 0.25 * i as f64);
    let path = geodesic_trace(&var, 0.0, &h, 0.5, 500).unwrap();
    let exp_dev = (path.end() - h.map(|v| (0.5 * v).exp())).amax();

    let lmm = lmm3();
    let flat = [
        explanatory_scheme(&fit, ExplanatoryForm::Diagonal, &[1.0, 1.0, 1.0]).unwrap(),
        location_scale_scheme(&fit, LocationScaleScheme::Response).unwrap(),
        lmm_cluster_shift_scheme(&lmm).unwrap().raw,
    ];
    let flat_res = flat
        .iter()
        .map(|m| {
            let h = DVector::from_fn(m.dim(), |i, _| 0.5 - 0.07 * i as f64);
            let line = SampledPath::from_fn(0.0, 1.0, 100, |t| m.null_point() + &h * t).unwrap();
            geodesic_residual(m, &line, 0.0, &cfg).unwrap()
        })
        .fold(0.0, f64::max);

    let cw = case_weight_scheme(&fit).unwrap();
    let h = DVector::from_fn(10, |i, _| 0.2 * (i as f64 - 4.5));
    let line = SampledPath::from_fn(0.0, 1.0, 100, |t| cw.null_point() + &h * t).unwrap();
    let cw_res = geodesic_residual(&cw, &line, 1.0, &cfg).unwrap();
    verdict(
        8,
        "variance 0-geodesic is exp(ht); flat and case-weight 1-geodesics are straight",
        exp_dev <= 1e-6 && flat_res < 1e-8 && cw_res < 1e-8,
        &format!("exp deviation {exp_dev:.1e}; flat residual {flat_res:.1e}; case-weight residual {cw_res:.1e}"),
    );
}

#[test]
fn criterion_09_eigen_properties() {
    let mut worst_ssi: f64 = 0.0;
    let mut worst_eig: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for k in 0..1000u64 {
        let mut rng = stream(4242, k);
        let p = rng.random_range(2..8);
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let ht = (&a + a.transpose()) * 0.5;
        let b = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        let g = &b * b.transpose() + DMatrix::identity(p, p) * 0.1;
        let e = eigen_influence(&ht, &g).unwrap();
        let normalized = e.normalized.as_ref().unwrap();
        for i in 0..p {
            let u = e.eigenvectors.column(i).into_owned();
            worst_res = worst_res.max((&ht * &u - &g * &u * e.eigenvalues[i]).norm() / ht.norm());
            worst_eig = worst_eig.max((standardized_si(&ht, &g, &u).unwrap() - normalized[i]).abs());
        }
        for _ in 0..100 {
            let h = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
            worst_ssi = worst_ssi.max(standardized_si(&ht, &g, &h).unwrap().abs());
        }
    }
    verdict(
        9,
        "|SSI| ≤ 1, SSI(u_i) = λ̂_i and eigen residuals over 1000 pairs",
        worst_ssi <= 1.0 && worst_eig <= 1e-10 && worst_res < 1e-8,
        &format!("max |SSI| {worst_ssi:.12}; max |SSI(u_i) − λ̂_i| {worst_eig:.1e}; max residual/‖H̃‖ {worst_res:.1e}"),
    );
}

#[test]
fn criterion_10_likelihood_displacement_structure() {
    let lmm = lmm3();
    let mut grad: f64 = 0.0;
    let mut hess: f64 = 0.0;
    let cfg = OracleConfig { fd_rel_step: 1e-3, ..OracleConfig::new(1) };
    for s in [lmm_covariance_scheme(&lmm).unwrap(), lmm_cluster_shift_scheme(&lmm).unwrap()] {
        for model in [&s.raw, &s.appropriate] {
            let f = |w: &DVector<f64>| likelihood_displacement(&lmm, model, w, Interest::Full, RefitOptions::default());
            let fd = fd_probe(&f, &model.null_point(), &cfg).unwrap();
            let closed = ld_probe(&lmm, model, Interest::Full, HessianForm::Observed).unwrap();
            grad = grad.max(fd.grad.norm());
            hess = hess.max(max_rel(&closed.hess, &fd.hess));
        }
    }
    verdict(
        10,
        "∇LD vanishes and H_LD = 2Δᵀ(−L̈)⁻¹Δ on the 3-cluster LMM",
        grad < 1e-5 && hess <= 1e-3,
        &format!("max |∇LD| {grad:.1e} < 1e-5; max rel H_LD deviation {hess:.1e} ≤ 1e-3"),
    );
}

#[test]
fn criterion_11_planted_outlier_is_ranked_first() {
    let cfg = AnalysisConfig {
        model: ModelKind::LinearMixed,
        covariance: Some(CovarianceStructure::CompoundSymmetry),
        scheme: Scheme::LmmCov,
        ..Default::default()
    };
    let mut hits = 0;
    let mut failed = 0;
    for seed in 1..=100u64 {
        let planted = (seed as usize * 7) % 30 + 1;
        let data = simulate_clustered(&SimulationConfig { outlier_cluster: Some(planted), seed, ..Default::default() })
            .unwrap();
        match analyze::run(&cfg, &data) {
            Ok(a) => {
                assert!(a.rescaled());
                let si = &a.report.basis_si;
                let top = (0..si.len()).max_by(|&i, &j| si[i].abs().total_cmp(&si[j].abs())).unwrap();
                if top + 1 == planted {
                    hits += 1;
                }
            }
            Err(_) => failed += 1,
        }
    }
    verdict(
        11,
        "planted outlier cluster has the largest |SI| under the rescaled covariance scheme",
        hits >= 95,
        &format!("{hits}/100 ranked first, {failed} fits failed"),
    );
}

#[test]
fn criterion_12_singular_scheme_stops_the_analysis() {
    let rows: Vec<(f64, f64, f64)> =
        (0..5).map(|i| (wiggle(i) + 2.0, 0.3 * i as f64 + wiggle(i + 9), wiggle(i + 20))).collect();
    let csv: String = rows.iter().enumerate().map(|(i, (y, a, b))| format!("{},{y},{a},{b}\n", i + 1)).collect();
    let data = influence_cli::ingest::read_csv(format!("cluster_id,y,x1,x2\n{csv}").as_bytes()).unwrap();
    let cfg = AnalysisConfig { scheme: Scheme::ExplanatoryFull, ..Default::default() };
    let screened = analyze::screen(&cfg, &data).unwrap();
    let v = &screened.raw_verdict;

    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "five.csv", &format!("cluster_id,y,x1,x2\n{csv}"));
    let out = dir.path().join("out");
    let o = run(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--scheme",
        "explanatory_full",
        "--out",
        out.to_str().unwrap(),
    ]);
    let err = String::from_utf8_lossy(&o.stderr);
    let message = err.contains("rank 5 of 10") && err.contains("explanatory_diag");
    verdict(
        12,
        "explanatory_full with q₁ = 2, n = 5 is singular and exits with code 3",
        v.rank == 5 && !v.is_appropriate && o.status.code() == Some(3) && message,
        &format!(
            "rank {}, appropriate {}, exit {:?}, stderr: {}",
            v.rank,
            v.is_appropriate,
            o.status.code(),
            err.trim()
        ),
    );
}
