#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use influence_cli::ingest::to_csv;
use influence_core::models::{simulate_clustered, Cluster, ClusteredDataset, SimulationConfig};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_influence"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Deterministic pseudo-normal values without an RNG dependency.
pub fn wiggle(i: usize) -> f64 {
    let a = (i as f64 * 12.9898 + 78.233).sin() * 43758.5453;
    let u = a - a.floor();
    let b = (i as f64 * 39.3467 + 11.135).sin() * 24634.6345;
    let v = b - b.floor();
    (-2.0 * (u + 1e-9).ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// A 10-row regression with columns `x1` (intercept), `x2`, `x3`.
pub fn regression_csv() -> String {
    let mut s = String::from("cluster_id,y,x1,x2,x3\n");
    for i in 0..10 {
        let (a, b) = (wiggle(2 * i + 100), wiggle(2 * i + 101));
        let y = 1.0 + 2.0 * a - b + 0.7 * wiggle(i + 500);
        s.push_str(&format!("r{},{y},1,{a},{b}\n", i + 1));
    }
    s
}

/// Seven clusters of sizes 4 through 10, fitted with compound symmetry in
/// the tests.
pub fn lmm_dataset() -> ClusteredDataset {
    let sim =
        simulate_clustered(&SimulationConfig { clusters: 7, min_m: 10, max_m: 10, seed: 12, ..Default::default() })
            .unwrap();
    let clusters = sim
        .clusters()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let m = 4 + i;
            Cluster::new(c.id.clone(), c.y.rows(0, m).into_owned(), c.x.rows(0, m).into_owned())
                .with_d(c.d.as_ref().unwrap().rows(0, m).into_owned())
        })
        .collect();
    ClusteredDataset::new(clusters).unwrap()
}

pub fn lmm_csv() -> String {
    String::from_utf8(to_csv(&lmm_dataset()).unwrap()).unwrap()
}

pub fn read_report(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}
