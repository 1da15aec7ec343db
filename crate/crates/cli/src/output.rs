//! CSV writers for reports, geometry and eigen profiles.

use std::path::{Path, PathBuf};

use influence_core::geometry::AppropriatenessVerdict;
use influence_core::GeometryAtPoint;

use crate::analyze::{Analysis, IndexLabel, Screened};
use crate::error::Result;
use crate::plot::index_plot;

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

/// Indices whose `|SI|` exceeds the mean plus two standard deviations of
/// `|SI|` over all indices.
pub fn flag_top(si: &[f64]) -> Vec<bool> {
    let n = si.len() as f64;
    if si.is_empty() {
        return Vec::new();
    }
    let abs: Vec<f64> = si.iter().map(|v| v.abs()).collect();
    let mean = abs.iter().sum::<f64>() / n;
    let sd = (abs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    abs.iter().map(|v| *v > mean + 2.0 * sd).collect()
}

fn label_columns(index: &[IndexLabel]) -> (bool, bool, bool) {
    (
        index.iter().any(|l| l.component.is_some()),
        index.iter().any(|l| l.cluster_id.is_some()),
        index.iter().any(|l| l.obs_index.is_some()),
    )
}

fn label_header(index: &[IndexLabel]) -> Vec<String> {
    let (c, k, o) = label_columns(index);
    [(c, "component"), (k, "cluster_id"), (o, "obs_index")]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n.to_string())
        .collect()
}

fn label_cells(index: &[IndexLabel], l: &IndexLabel) -> Vec<String> {
    let (c, k, o) = label_columns(index);
    let mut out = Vec::new();
    for (on, v) in [(c, &l.component), (k, &l.cluster_id), (o, &l.obs_index)] {
        if on {
            out.push(v.clone().unwrap_or_default());
        }
    }
    out
}

pub fn report_csv(a: &Analysis) -> Result<String> {
    let r = &a.report;
    let index = &a.screened.index;
    let flags = flag_top(&r.basis_si);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = label_header(index);
    header.extend(["FI", "SI", "SSI", "C", "B", "flag_top"].map(String::from));
    w.write_record(&header)?;
    for (i, l) in index.iter().enumerate() {
        let mut rec = label_cells(index, l);
        rec.extend([
            num(r.basis_fi[i]),
            num(r.basis_si[i]),
            opt(r.basis_ssi[i]),
            num(r.basis_c[i]),
            opt(r.basis_b[i]),
            u8::from(flags[i]).to_string(),
        ]);
        w.write_record(&rec)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8");
    Ok(format!("# scheme {}; flag_top is a heuristic: 1 where |SI| > mean(|SI|) + 2 SD(|SI|)\n{body}", r.scheme))
}

fn verdict_lines(stage: &str, v: &AppropriatenessVerdict) -> String {
    format!(
        "# {stage}: appropriate = {}, c_hat = {}, rank = {}, singular = {}, min_eigenvalue = {}, max_offdiag_abs_corr = {}, max_iso_deviation = {}\n",
        v.is_appropriate, v.c_hat, v.rank, v.singular, v.min_eigenvalue, v.max_offdiag_abs_corr, v.max_iso_deviation
    )
}

fn metric_rows(w: &mut csv::Writer<Vec<u8>>, stage: &str, g: &GeometryAtPoint) -> Result<()> {
    let p = g.dim();
    for i in 0..p {
        for j in 0..p {
            w.write_record([stage.to_string(), (i + 1).to_string(), (j + 1).to_string(), num(g.g[(i, j)])])?;
        }
    }
    Ok(())
}

/// `G(ω⁰)` in long form with the appropriateness verdicts as comments.
pub fn geometry_csv(s: &Screened, rescaled: Option<(&GeometryAtPoint, &AppropriatenessVerdict)>) -> Result<String> {
    let mut head = format!("# scheme {}; {}\n", s.raw.name(), s.summary);
    head.push_str(&verdict_lines("raw", &s.raw_verdict));
    if let Some((_, v)) = rescaled {
        head.push_str(&verdict_lines("rescaled", v));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "i", "j", "g"])?;
    metric_rows(&mut w, "raw", &s.raw_geometry)?;
    if let Some((g, _)) = rescaled {
        metric_rows(&mut w, "rescaled", g)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8");
    Ok(head + &body)
}

/// Eigenpairs of `G⁻¹H̃` ordered by `|λ|`, one row each, followed by `h_max`.
pub fn eigen_csv(a: &Analysis) -> Result<String> {
    let r = &a.report;
    let p = r.eigenvalues.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "lambda".into(), "lambda_normalized".into()];
    header.extend((1..=p).map(|k| format!("v{k}")));
    w.write_record(&header)?;
    for k in 0..p {
        let mut rec =
            vec![(k + 1).to_string(), num(r.eigenvalues[k]), opt(r.normalized_eigenvalues.as_ref().map(|n| n[k]))];
        rec.extend(r.eigenvectors.column(k).iter().map(|v| num(*v)));
        w.write_record(&rec)?;
    }
    let mut rec = vec!["h_max".to_string(), num(r.fi_max), "NA".into()];
    match &r.h_max {
        Some(h) => rec.extend(h.iter().map(|v| num(*v))),
        None => rec.extend(std::iter::repeat_n("NA".to_string(), p)),
    }
    w.write_record(&rec)?;
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv output is UTF-8"))
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

pub fn write_geometry(dir: &Path, s: &Screened) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    write(dir, "geometry.csv", &geometry_csv(s, None)?)
}

/// Writes `report.csv`, `geometry.csv`, `eigen.csv` and `index_plot.svg`.
pub fn write_all(dir: &Path, a: &Analysis) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let rescaled = a.rescaled_verdict.as_ref().map(|v| (&a.geometry, v));
    Ok(vec![
        write(dir, "report.csv", &report_csv(a)?)?,
        write(dir, "geometry.csv", &geometry_csv(&a.screened, rescaled)?)?,
        write(dir, "eigen.csv", &eigen_csv(a)?)?,
        write(dir, "index_plot.svg", &index_plot(a))?,
    ])
}
