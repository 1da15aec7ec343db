mod common;

use influence_cli::analyze;
use influence_cli::config::{AnalysisConfig, Objective, Scheme};
use influence_cli::ingest::{ingest, read_csv, DatasetSummary};
use influence_cli::verify::{self, Outcome, VerifyOptions};
use influence_cli::CliError;
use influence_core::models::{CovarianceStructure, ModelKind};
use nalgebra::{DMatrix, DVector};

use common::*;

#[test]
fn ingest_groups_rows_by_cluster_in_file_order() {
    let data = read_csv("cluster_id,y,x1\nA,1.0,1\nA,2.0,1\nB,0.5,1\n".as_bytes()).unwrap();
    assert_eq!(data.n(), 2);
    assert_eq!(data.sizes(), vec![2, 1]);
    assert_eq!(data.cluster_labels(), vec!["A", "B"]);
    assert_eq!(data.clusters()[0].y.as_slice(), &[1.0, 2.0]);

    let interleaved = read_csv("cluster_id,y\nB,1\nA,2\nB,3\n".as_bytes()).unwrap();
    assert_eq!(interleaved.cluster_labels(), vec!["B", "A"]);
    assert_eq!(interleaved.clusters()[0].y.as_slice(), &[1.0, 3.0]);
    assert_eq!(interleaved.q1(), 1, "no x columns gives an intercept");
}

#[test]
fn ingest_regression_fixture() {
    let data = read_csv(regression_csv().as_bytes()).unwrap();
    let s = DatasetSummary::of(&data);
    assert_eq!((s.total, s.q1, s.n), (10, 3, 10));
}

#[test]
fn ingest_errors() {
    let err = read_csv("cluster_id,y,x1\nA,1.0,1\nB,,1\n".as_bytes()).unwrap_err();
    match err {
        CliError::NonNumericCell { row, column, .. } => assert_eq!((row, column.as_str()), (3, "y")),
        e => panic!("unexpected {e}"),
    }
    assert!(matches!(read_csv("cluster_id,x1\nA,1\n".as_bytes()), Err(CliError::MissingColumn(c)) if c == "y"));
    assert!(matches!(read_csv("y,x1\n1,1\n".as_bytes()), Err(CliError::MissingColumn(c)) if c == "cluster_id"));
    assert!(matches!(read_csv("cluster_id,y\n,1\n".as_bytes()), Err(CliError::EmptyCluster { row: 2 })));
    assert!(matches!(read_csv("cluster_id,y,x1,x3\nA,1,1,1\n".as_bytes()), Err(CliError::MissingColumn(_))));
    assert!(matches!(
        read_csv("cluster_id,obs_index,y\nA,first,1\n".as_bytes()),
        Err(CliError::NonNumericCell { column, .. }) if column == "obs_index"
    ));
}

#[test]
fn lmm_covariance_scheme_is_rescaled() {
    let cfg = AnalysisConfig {
        model: ModelKind::LinearMixed,
        covariance: Some(CovarianceStructure::CompoundSymmetry),
        scheme: Scheme::LmmCov,
        ..Default::default()
    };
    let a = analyze::run(&cfg, &lmm_dataset()).unwrap();
    assert!(!a.screened.raw_verdict.is_appropriate);
    assert!(a.rescaled_verdict.as_ref().unwrap().is_appropriate);
    assert!((a.geometry.g.clone() - DMatrix::identity(7, 7)).amax() < 1e-10);
    for (i, m) in (4..=10).enumerate() {
        assert_eq!(a.screened.raw_geometry.g[(i, i)], 0.5 * m as f64);
    }
    assert_eq!(a.report.basis_si.len(), 7);
    let ids: Vec<_> = a.screened.index.iter().map(|l| l.cluster_id.clone().unwrap()).collect();
    assert_eq!(ids, (1..=7).map(|i| i.to_string()).collect::<Vec<_>>());
    assert!(a.screened.index.iter().all(|l| l.obs_index.is_none()));

    let kept = analyze::run(&AnalysisConfig { auto_rescale: false, ..cfg }, &lmm_dataset()).unwrap();
    assert!(kept.rescaled_verdict.is_none());
}

#[test]
fn rss_report_matches_closed_form() {
    let data = read_csv(regression_csv().as_bytes()).unwrap();
    let cfg = AnalysisConfig { scheme: Scheme::RegVariance, objective: Objective::NegRss, ..Default::default() };
    let a = analyze::run(&cfg, &data).unwrap();
    let x = data.stacked_x();
    let y = data.stacked_y();
    let inv = (x.transpose() * &x).try_inverse().unwrap();
    let p = &x * inv * x.transpose();
    let r = &y - &p * &y;
    for i in 0..10 {
        let expected = 2.0 * r[i] * r[i] * (2.0 * p[(i, i)] - 1.0);
        assert!((a.report.basis_si[i] - expected).abs() < 1e-8 * expected.abs().max(1.0));
        assert!((a.report.basis_fi[i] - 2.0 * r[i].powi(4)).abs() < 1e-10);
    }
    let r2 = DVector::from_iterator(10, r.iter().map(|v| v * v));
    assert!((a.report.h_max.clone().unwrap() - &r2 / r2.norm()).amax() < 1e-10);
    assert!(a.rescaled_verdict.is_none());
}

#[test]
fn analyze_writes_outputs_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "lmm.csv", &lmm_csv());
    let cfg = write(
        dir.path(),
        "cfg.txt",
        "model = linear_mixed\ncovariance = compound_symmetry\nscheme = lmm_cluster_shift\n",
    );
    let outs: Vec<_> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for out in &outs {
        let o = run(&[
            "analyze",
            "--data",
            data.to_str().unwrap(),
            "--config",
            cfg.to_str().unwrap(),
            "--scheme",
            "lmm_mean_shift",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.csv", "geometry.csv", "eigen.csv", "index_plot.svg"] {
        let a = std::fs::read(outs[0].join(f)).unwrap();
        let b = std::fs::read(outs[1].join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs between runs");
    }
    // The flag overrode the file: the report is per observation.
    let (header, rows) = read_report(&outs[0].join("report.csv"));
    assert_eq!(header, ["cluster_id", "obs_index", "FI", "SI", "SSI", "C", "B", "flag_top"]);
    assert_eq!(rows.len(), (4..=10).sum::<usize>());
    assert_eq!(&rows[4][..2], ["2", "1"]);
    let text = std::fs::read_to_string(outs[0].join("report.csv")).unwrap();
    assert!(text.starts_with('#') && text.lines().next().unwrap().contains("heuristic"));
    let svg = std::fs::read_to_string(outs[0].join("index_plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn explanatory_full_stops_with_exit_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..5)
        .map(|i| format!("{},{},{},{}\n", i + 1, wiggle(i) + 2.0, 0.3 * i as f64 + wiggle(i + 9), wiggle(i + 20)))
        .collect();
    let data = write(dir.path(), "five.csv", &format!("cluster_id,y,x1,x2\n{rows}"));
    let out = dir.path().join("out");
    let o = run(&[
        "analyze",
        "--data",
        data.to_str().unwrap(),
        "--scheme",
        "explanatory_full",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rank 5 of 10") && err.contains("explanatory_diag"), "{err}");
    let geometry = std::fs::read_to_string(out.join("geometry.csv")).unwrap();
    assert!(geometry.contains("singular = true"));
    assert!(!out.join("report.csv").exists());
}

#[test]
fn validation_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "reg.csv", &regression_csv());
    let d = data.to_str().unwrap();
    let bad_cfg = write(dir.path(), "bad.txt", "scheme = case_weight\ncolour = blue\n");
    for args in [
        vec!["analyze", "--data", d, "--scheme", "lmm_cov"],
        vec!["analyze", "--data", d, "--scheme", "case_weight", "--objective", "neg_rss"],
        vec!["analyze", "--data", d, "--config", bad_cfg.to_str().unwrap()],
        vec!["analyze", "--data", "/nonexistent/file.csv"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let blank = write(dir.path(), "blank.csv", "cluster_id,y,x1\n1,2.0,1\n2,,1\n");
    let o = run(&["analyze", "--data", blank.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
}

#[test]
fn negative_alpha_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "reg.csv", &regression_csv());
    let out = dir.path().join("o");
    let o = run(&["analyze", "--data", data.to_str().unwrap(), "--alpha", "-1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn small_oracle(cfg: AnalysisConfig) -> AnalysisConfig {
    AnalysisConfig { mc_draws: 20_000, ..cfg }
}

#[test]
fn verify_case_weight_gaussian_passes() {
    let data = read_csv(regression_csv().as_bytes()).unwrap();
    let cfg = small_oracle(AnalysisConfig { scheme: Scheme::CaseWeight, seed: 4, ..Default::default() });
    let report = verify::run(&cfg, &data, VerifyOptions::default()).unwrap();
    assert!(report.all_passed(), "{report}");
    let metric = report.checks.iter().find(|c| c.name == "metric").unwrap();
    assert_eq!(metric.outcome, Outcome::Pass);
}

#[test]
fn verify_flat_scheme_geodesic_is_straight() {
    let data = read_csv(regression_csv().as_bytes()).unwrap();
    let cfg = small_oracle(AnalysisConfig { scheme: Scheme::ExplanatoryDiag, ..Default::default() });
    let report = verify::run(&cfg, &data, VerifyOptions::default()).unwrap();
    let geo = report.checks.iter().find(|c| c.name == "geodesic").unwrap();
    assert_eq!(geo.outcome, Outcome::Pass, "{report}");
    assert!(geo.quantity.contains("flat"));
    assert!(report.all_passed(), "{report}");
}

#[test]
fn verify_rss_and_loglinear_probes() {
    let data = read_csv(regression_csv().as_bytes()).unwrap();
    let cfg = small_oracle(AnalysisConfig {
        scheme: Scheme::RegVariance,
        objective: Objective::NegRss,
        ..Default::default()
    });
    let report = verify::run(&cfg, &data, VerifyOptions::default()).unwrap();
    assert!(report.all_passed(), "{report}");

    let cfg = small_oracle(AnalysisConfig {
        model: ModelKind::LocationScale,
        scheme: Scheme::Loglinear,
        objective: Objective::LoglikRatio,
        ..Default::default()
    });
    let iid = read_csv("cluster_id,y\n1,0.3\n2,-1.1\n3,0.8\n4,2.0\n5,-0.2\n6,0.1\n".as_bytes()).unwrap();
    let report = verify::run(&cfg, &iid, VerifyOptions::default()).unwrap();
    assert!(report.all_passed(), "{report}");
}

#[test]
fn corrupted_connection_is_caught_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "reg.csv", &regression_csv());
    let cfg = write(dir.path(), "cfg.txt", "scheme = reg_variance\nmc_draws = 5000\noracle_probe = false\n");
    let args = ["verify", "--data", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--seed", "3"];
    let ok = run(&args);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let mut bad_args = args.to_vec();
    bad_args.push("--corrupt-gamma");
    let bad = run(&bad_args);
    assert_eq!(bad.status.code(), Some(3));
    let table = String::from_utf8_lossy(&bad.stdout);
    let line = table.lines().find(|l| l.starts_with("FAIL")).expect("a failing row");
    assert!(line.contains("connection") && line.contains("Γ⁰"), "{table}");
}

#[test]
fn simulate_round_trips_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = ["a.csv", "b.csv", "c.csv"].iter().map(|n| dir.path().join(n)).collect();
    for (p, seed) in paths.iter().zip(["5", "5", "6"]) {
        let o = run(&[
            "simulate",
            "--clusters",
            "12",
            "--min-m",
            "3",
            "--max-m",
            "6",
            "--outlier-cluster",
            "4",
            "--inflate",
            "5",
            "--seed",
            seed,
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_ne!(a, std::fs::read(&paths[2]).unwrap());
    let data = ingest(&paths[0]).unwrap();
    assert_eq!(data.n(), 12);
    assert!(data.sizes().iter().all(|m| (3..=6).contains(m)));
    assert!(data.clusters().iter().all(|c| c.d.is_some() && c.obs_index.is_some()));
    let o = run(&["simulate", "--clusters", "3", "--outlier-cluster", "9", "--out", paths[2].to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
