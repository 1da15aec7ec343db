//! Static SVG index plots of SI and FI.

use std::fmt::Write;

use crate::analyze::{Analysis, IndexLabel};
use crate::output::flag_top;

const WIDTH: f64 = 760.0;
const PANEL: f64 = 260.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const GAP: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn label_text(l: &IndexLabel) -> String {
    escape(
        &[&l.component, &l.cluster_id, &l.obs_index].iter().filter_map(|v| v.as_deref()).collect::<Vec<_>>().join(":"),
    )
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn panel(svg: &mut String, top: f64, title: &str, values: &[f64], flags: &[bool], labels: &[String]) {
    let n = values.len().max(1);
    let lo = values.iter().copied().fold(0.0f64, f64::min);
    let hi = values.iter().copied().fold(0.0f64, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let x = |i: usize| LEFT + plot_w * (i as f64 + 0.5) / n as f64;
    let y = |v: f64| top + PANEL * (hi - v) / (hi - lo);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}" font-size="14">{title}</text>"#, top - 8.0);
    let _ =
        writeln!(svg, r#"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{PANEL}" fill="none" stroke="black"/>"#);
    for v in [lo, 0.0, hi] {
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y0:.2}" x2="{LEFT}" y2="{y0:.2}" stroke="black"/><text x="{}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
            LEFT - 4.0,
            LEFT - 6.0,
            y(v) + 3.0,
            fmt_tick(v),
            y0 = y(v),
        );
    }
    let zero = y(0.0);
    let _ = writeln!(
        svg,
        r##"<line x1="{LEFT}" y1="{zero:.2}" x2="{}" y2="{zero:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
        WIDTH - RIGHT
    );
    for (i, &v) in values.iter().enumerate() {
        let colour = if flags[i] { "#c0392b" } else { "#2c3e50" };
        let _ = writeln!(
            svg,
            r#"<line x1="{xi:.2}" y1="{zero:.2}" x2="{xi:.2}" y2="{yi:.2}" stroke="{colour}"/><circle cx="{xi:.2}" cy="{yi:.2}" r="2.5" fill="{colour}"><title>{}: {}</title></circle>"#,
            labels[i],
            v,
            xi = x(i),
            yi = y(v),
        );
    }
    let step = (n / 10).max(1);
    for i in (0..n).step_by(step) {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
            x(i),
            top + PANEL + 14.0,
            i + 1
        );
    }
}

/// Index plots of `SI_{E_i}` (top) and `FI_{E_i}` (bottom). Flagged indices
/// are drawn in red.
pub fn index_plot(a: &Analysis) -> String {
    let r = &a.report;
    let labels: Vec<String> = a.screened.index.iter().map(label_text).collect();
    let height = TOP + 2.0 * PANEL + GAP + 40.0;
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    svg.push('\n');
    let flags = flag_top(&r.basis_si);
    panel(&mut svg, TOP, &format!("SI along basis directions ({})", escape(&r.scheme)), &r.basis_si, &flags, &labels);
    panel(&mut svg, TOP + PANEL + GAP, "FI along basis directions", &r.basis_fi, &flags, &labels);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">index</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        height - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}
