//! Independent numerical cross-checks for the closed forms: Monte Carlo
//! metrics, finite-difference probes, geodesic residuals and a
//! reparametrization harness. Nothing here feeds production reports.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{InfluenceError, Result};
use crate::geometry::montecarlo::mc_moments;
use crate::geometry::{
    geometry_at_with, pull_back_geometry, Chart, ClosedGeometry, ComponentwiseDiffeo, GeometryAtPoint, McOptions,
    PerturbedModel, SampledPath,
};
use crate::measures::{
    covariant_hessian, first_order_influence, normal_curvature, second_order_influence, standardized_si,
    ObjectiveProbe, Provenance,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub seed: u64,
    pub mc_draws: usize,
    /// Relative Hessian step; the gradient always uses `ε^{1/3}`.
    pub fd_rel_step: f64,
    pub quadrature_tol: f64,
    pub ode_steps_per_unit: usize,
}

impl OracleConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            mc_draws: 200_000,
            fd_rel_step: f64::EPSILON.powf(0.25),
            quadrature_tol: 1e-12,
            ode_steps_per_unit: crate::geometry::DEFAULT_STEPS_PER_UNIT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mc_draws == 0 || self.ode_steps_per_unit == 0 {
            return Err(InfluenceError::InvalidParameter("oracle counts must be positive".into()));
        }
        if !(self.fd_rel_step > 0.0 && self.quadrature_tol > 0.0) {
            return Err(InfluenceError::InvalidParameter("oracle step and tolerance must be positive".into()));
        }
        Ok(())
    }

    fn mc(&self) -> McOptions {
        McOptions { seed: self.seed, draws: self.mc_draws }
    }
}

/// Sample mean of `∂_iℓ ∂_jℓ` and its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct McMetric {
    pub g: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub draws: usize,
}

impl McMetric {
    /// Largest `|Ĝ − G| / stderr` over entries with a positive standard error,
    /// and the largest absolute gap over entries whose products are constant.
    pub fn z_scores(&self, g: &DMatrix<f64>) -> (f64, f64) {
        let mut z: f64 = 0.0;
        let mut exact: f64 = 0.0;
        for ((a, b), s) in self.g.iter().zip(g.iter()).zip(self.stderr.iter()) {
            if *s > 0.0 {
                z = z.max((a - b).abs() / s);
            } else {
                exact = exact.max((a - b).abs());
            }
        }
        (z, exact)
    }
}

/// Per-entry z threshold keeping the family-wise error rate of `k`
/// independent two-sided checks at that of a single `z`-sigma check.
pub fn sidak_z(k: usize, z: f64) -> f64 {
    let single = libm::erfc(z / std::f64::consts::SQRT_2);
    let per = 1.0 - (1.0 - single).powf(1.0 / k.max(1) as f64);
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if libm::erfc(mid / std::f64::consts::SQRT_2) > per {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn mc_metric(model: &PerturbedModel, omega: &DVector<f64>, cfg: &OracleConfig) -> Result<McMetric> {
    cfg.validate()?;
    let m = mc_moments(model, omega, cfg.mc(), None, false)?;
    Ok(McMetric { g: m.g, stderr: m.g_stderr, draws: m.draws })
}

fn eval(f: &(dyn Fn(&DVector<f64>) -> Result<f64> + Sync), x: &DVector<f64>) -> Result<f64> {
    let v = f(x)?;
    if !v.is_finite() {
        return Err(InfluenceError::NonFiniteValue(format!("objective at {:?}", x.as_slice())));
    }
    Ok(v)
}

/// Central-difference gradient and Hessian of `f` at `omega0`.
pub fn fd_probe(
    f: &(dyn Fn(&DVector<f64>) -> Result<f64> + Sync),
    omega0: &DVector<f64>,
    cfg: &OracleConfig,
) -> Result<ObjectiveProbe> {
    cfg.validate()?;
    let p = omega0.len();
    let f0 = eval(f, omega0)?;
    let gstep: Vec<f64> = omega0.iter().map(|w| f64::EPSILON.cbrt() * w.abs().max(1.0)).collect();
    let hstep: Vec<f64> = omega0.iter().map(|w| cfg.fd_rel_step * w.abs().max(1.0)).collect();
    let shifted = |moves: &[(usize, f64)]| {
        let mut x = omega0.clone();
        for &(i, d) in moves {
            x[i] += d;
        }
        eval(f, &x)
    };

    let grad: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|i| {
            let h = gstep[i];
            Ok((shifted(&[(i, h)])? - shifted(&[(i, -h)])?) / (2.0 * h))
        })
        .collect::<Result<_>>()?;

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let entries: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (hi, hj) = (hstep[i], hstep[j]);
            if i == j {
                Ok((shifted(&[(i, hi)])? - 2.0 * f0 + shifted(&[(i, -hi)])?) / (hi * hi))
            } else {
                let pp = shifted(&[(i, hi), (j, hj)])?;
                let pm = shifted(&[(i, hi), (j, -hj)])?;
                let mp = shifted(&[(i, -hi), (j, hj)])?;
                let mm = shifted(&[(i, -hi), (j, -hj)])?;
                Ok((pp - pm - mp + mm) / (4.0 * hi * hj))
            }
        })
        .collect::<Result<_>>()?;
    let mut hess = DMatrix::zeros(p, p);
    for (&(i, j), v) in pairs.iter().zip(entries) {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    Ok(ObjectiveProbe::new(f0, DVector::from_vec(grad), hess, Provenance::FiniteDifference))
}

/// Max over interior grid points of `‖ω̈ + G⁻¹c‖` with
/// `c_s = Σ Γ^α_jks ω̇_j ω̇_k`, derivatives by central differences.
pub fn geodesic_residual(model: &PerturbedModel, path: &SampledPath, alpha: f64, cfg: &OracleConfig) -> Result<f64> {
    path.validate()?;
    for p in &path.points {
        model.check_domain(p)?;
    }
    let n = path.t.len();
    if n < 3 {
        return Ok(0.0);
    }
    let residuals: Vec<f64> = (1..n - 1)
        .into_par_iter()
        .map(|k| {
            let (h1, h2) = (path.t[k] - path.t[k - 1], path.t[k + 1] - path.t[k]);
            let (a, b, c) = (&path.points[k - 1], &path.points[k], &path.points[k + 1]);
            let vel = a * (-h2 / (h1 * (h1 + h2))) + b * ((h2 - h1) / (h1 * h2)) + c * (h1 / (h2 * (h1 + h2)));
            let acc = (a / (h1 * (h1 + h2)) - b / (h1 * h2) + c / (h2 * (h1 + h2))) * 2.0;
            let geo = geometry_at_with(model, b, alpha, cfg.mc())?;
            let force = DVector::from_vec(geo.gamma_alpha.contract_first_two(vel.as_slice(), vel.as_slice()));
            let ginv = geo.require_ginv()?;
            Ok((acc + ginv * force).norm())
        })
        .collect::<Result<_>>()?;
    Ok(residuals.into_iter().fold(0.0, f64::max))
}

/// Draws a strictly increasing componentwise cubic fixing `center`, with
/// `a ∈ [0.5, 2]` and nonzero quadratic and cubic terms.
pub fn random_diffeo(center: &DVector<f64>, seed: u64, index: u64) -> ComponentwiseDiffeo {
    let mut rng = crate::rng::stream(seed, index);
    let p = center.len();
    let mut a = Vec::with_capacity(p);
    let mut b = Vec::with_capacity(p);
    let mut c = Vec::with_capacity(p);
    for _ in 0..p {
        let ai: f64 = rng.random_range(0.5..2.0);
        let bi: f64 = rng.random_range(0.1..1.0);
        let bound = (3.0 * ai * bi).sqrt();
        let ci = rng.random_range(-0.9..0.9) * bound;
        a.push(ai);
        b.push(bi);
        c.push(ci);
    }
    ComponentwiseDiffeo::new(center.clone(), a, c, b).expect("coefficients satisfy the monotonicity bound")
}

/// One direction's measures in the original (`ω`) and new (`φ`) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceRow {
    pub fi: (f64, f64),
    pub si: (f64, f64),
    pub ssi: Option<(f64, f64)>,
    /// Normal curvature, which is not expected to agree.
    pub curvature: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceRecord {
    pub rows: Vec<InvarianceRow>,
    pub max_fi_deviation: f64,
    pub max_si_deviation: f64,
    pub max_ssi_deviation: f64,
}

impl InvarianceRecord {
    pub fn max_deviation(&self) -> f64 {
        self.max_fi_deviation.max(self.max_si_deviation).max(self.max_ssi_deviation)
    }
}

pub fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

fn geometry_in_chart(geom: &GeometryAtPoint, chart: &dyn Chart, phi0: &DVector<f64>) -> GeometryAtPoint {
    let closed = ClosedGeometry { g: geom.g.clone(), t: geom.t.clone(), gamma0: geom.gamma0.clone() };
    let pulled = pull_back_geometry(&closed, &chart.jacobian(phi0), &chart.second_derivatives(phi0));
    GeometryAtPoint::from_parts(phi0.clone(), geom.alpha, pulled.g, pulled.t, pulled.gamma0, geom.source.clone())
}

fn measures(probe: &ObjectiveProbe, geom: &GeometryAtPoint, h: &DVector<f64>) -> Result<(f64, f64, Option<f64>, f64)> {
    let ht = covariant_hessian(probe, geom)?;
    let fi = first_order_influence(probe, &geom.g, h)?;
    let si = second_order_influence(&ht, &geom.g, h)?;
    let ssi = match standardized_si(&ht, &geom.g, h) {
        Ok(v) => Some(v),
        Err(InfluenceError::ZeroHessian) => None,
        Err(e) => return Err(e),
    };
    let c = normal_curvature(probe, h)?;
    Ok((fi, si, ssi, c))
}

/// Re-expresses a model in the coordinates `φ = diffeo(ω)`, rebuilds the probe
/// there with `probe_builder`, pulls `G`, `T` and `Γ⁰` back by the Jacobian
/// rules, pushes each direction forward as `Φh` and compares FI, SI and SSI
/// across the two coordinate systems.
pub fn invariance_harness(
    model: &PerturbedModel,
    probe_builder: &dyn Fn(&PerturbedModel) -> Result<ObjectiveProbe>,
    geom: &GeometryAtPoint,
    diffeo: &ComponentwiseDiffeo,
    directions: &[DVector<f64>],
) -> Result<InvarianceRecord> {
    let omega0 = model.null_point();
    if diffeo.center.len() != omega0.len() {
        return Err(InfluenceError::DimensionMismatch { expected: omega0.len(), got: diffeo.center.len() });
    }
    if (&diffeo.center - &omega0).amax() > 0.0 {
        return Err(InfluenceError::InvalidParameter("diffeomorphism must fix the null point".into()));
    }
    // Re-validate in case the caller assembled the struct by hand.
    let diffeo = ComponentwiseDiffeo::new(diffeo.center.clone(), diffeo.a.clone(), diffeo.c.clone(), diffeo.b.clone())?;
    let reparam = model.with_chart(Arc::new(diffeo.clone()))?;
    let phi0 = reparam.null_point();
    let probe_w = probe_builder(model)?;
    let probe_p = probe_builder(&reparam)?;
    let geom_p = geometry_in_chart(geom, &diffeo, &phi0);
    let push = diffeo.forward_jacobian(&omega0);

    let mut rows = Vec::with_capacity(directions.len());
    let (mut dfi, mut dsi, mut dssi) = (0.0f64, 0.0f64, 0.0f64);
    for h in directions {
        let (fi_w, si_w, ssi_w, c_w) = measures(&probe_w, geom, h)?;
        let (fi_p, si_p, ssi_p, c_p) = measures(&probe_p, &geom_p, &(&push * h))?;
        dfi = dfi.max(relative_deviation(fi_w, fi_p));
        dsi = dsi.max(relative_deviation(si_w, si_p));
        let ssi = match (ssi_w, ssi_p) {
            (Some(a), Some(b)) => {
                dssi = dssi.max(relative_deviation(a, b));
                Some((a, b))
            }
            (None, None) => None,
            _ => {
                dssi = f64::INFINITY;
                None
            }
        };
        rows.push(InvarianceRow { fi: (fi_w, fi_p), si: (si_w, si_p), ssi, curvature: (c_w, c_p) });
    }
    Ok(InvarianceRecord { rows, max_fi_deviation: dfi, max_si_deviation: dsi, max_ssi_deviation: dssi })
}

/// How each measure moves when the objective is scaled by `k`: the ratio
/// `FI(kf)/(k²FI(f))`, `SI(kf)/(k SI(f))`, `SSI(kf)/SSI(f)` (all 1 in exact
/// arithmetic) and the relative change of `C_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleRecord {
    pub fi_ratio: f64,
    pub si_ratio: f64,
    pub ssi_ratio: f64,
    pub curvature_deviation: f64,
}

pub fn scale_harness(probe: &ObjectiveProbe, geom: &GeometryAtPoint, h: &DVector<f64>, k: f64) -> Result<ScaleRecord> {
    if !(k > 0.0) {
        return Err(InfluenceError::InvalidParameter("scale factor must be positive".into()));
    }
    let (fi, si, ssi, c) = measures(probe, geom, h)?;
    let (fik, sik, ssik, ck) = measures(&probe.scaled(k), geom, h)?;
    let ssi_ratio = match (ssi, ssik) {
        (Some(a), Some(b)) => b / a,
        _ => return Err(InfluenceError::ZeroHessian),
    };
    Ok(ScaleRecord {
        fi_ratio: fik / (k * k * fi),
        si_ratio: sik / (k * si),
        ssi_ratio,
        curvature_deviation: relative_deviation(c, ck),
    })
}
