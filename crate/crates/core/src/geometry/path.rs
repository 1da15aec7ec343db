use nalgebra::DVector;

use super::model::PerturbedModel;
use super::{geometry_at, GeometryAtPoint, MAX_CONDITION};
use crate::error::{InfluenceError, Result};
use crate::linalg::condition_number;

pub const DEFAULT_STEPS_PER_UNIT: usize = 1000;

/// A curve sampled on an increasing parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    pub t: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    /// Velocities when the curve came from an integrator.
    pub velocities: Option<Vec<DVector<f64>>>,
}

impl SampledPath {
    pub fn new(t: Vec<f64>, points: Vec<DVector<f64>>) -> Result<Self> {
        let path = Self { t, points, velocities: None };
        path.validate()?;
        Ok(path)
    }

    /// Samples `f` at `n + 1` equally spaced parameters on `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, n: usize, f: impl Fn(f64) -> DVector<f64>) -> Result<Self> {
        if n == 0 {
            return Err(InfluenceError::DegenerateCurve);
        }
        let t: Vec<f64> = (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect();
        let points = t.iter().map(|&s| f(s)).collect();
        Self::new(t, points)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.len() < 2 || self.t.len() != self.points.len() || self.t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(InfluenceError::DegenerateCurve);
        }
        Ok(())
    }

    pub fn end(&self) -> &DVector<f64> {
        self.points.last().expect("validated path")
    }
}

const GAUSS3: [(f64, f64); 3] =
    [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// Length `∫ √(ω̇ᵀ G(ω) ω̇) dt` of the piecewise-linear interpolant of the
/// curve, with three-point Gauss rules on every grid segment.
pub fn path_distance(model: &PerturbedModel, curve: &SampledPath, alpha: f64) -> Result<f64> {
    curve.validate()?;
    for p in &curve.points {
        model.check_domain(p)?;
    }
    let mut total = 0.0;
    for k in 0..curve.t.len() - 1 {
        let (a, b) = (&curve.points[k], &curve.points[k + 1]);
        let dt = curve.t[k + 1] - curve.t[k];
        let v = (b - a) / dt;
        if v.amax() == 0.0 {
            continue;
        }
        for &(x, w) in &GAUSS3 {
            let s = 0.5 * (x + 1.0);
            let pt = a + (b - a) * s;
            let geo = geometry_at(model, &pt, alpha)?;
            let q = v.dot(&(&geo.g * &v));
            total += 0.5 * dt * w * q.max(0.0).sqrt();
        }
    }
    Ok(total)
}

fn acceleration(model: &PerturbedModel, alpha: f64, w: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    model.check_domain(w)?;
    let geo = model.closed_geometry(w).ok_or_else(|| {
        InfluenceError::GeometryUnavailable(format!("{}: geodesics need closed-form geometry", model.name()))
    })??;
    let cond = condition_number(&geo.g);
    if cond > MAX_CONDITION {
        return Err(InfluenceError::SingularMetric(format!("condition number {cond:.3e} along the geodesic")));
    }
    let gamma = geo.gamma0.axpy(-0.5 * alpha, &geo.t);
    let c = DVector::from_vec(gamma.contract_first_two(v.as_slice(), v.as_slice()));
    let sol = geo
        .g
        .clone()
        .cholesky()
        .ok_or_else(|| InfluenceError::SingularMetric("metric is not positive definite along the geodesic".into()))?
        .solve(&c);
    Ok(-sol)
}

/// Integrates `ω̈_s + g^{si} Γ^α_{jki} ω̇_j ω̇_k = 0` from `(ω⁰, h)` over
/// `[0, t_end]` with `steps` classical Runge–Kutta steps.
pub fn geodesic_trace(
    model: &PerturbedModel,
    alpha: f64,
    h: &DVector<f64>,
    t_end: f64,
    steps: usize,
) -> Result<SampledPath> {
    if h.len() != model.dim() {
        return Err(InfluenceError::DimensionMismatch { expected: model.dim(), got: h.len() });
    }
    if steps == 0 || !(t_end > 0.0) {
        return Err(InfluenceError::InvalidParameter("geodesic needs t_end > 0 and at least one step".into()));
    }
    if h.amax() == 0.0 {
        return Err(InfluenceError::DegenerateDirection);
    }
    let dt = t_end / steps as f64;
    let mut w = model.null_point();
    let mut v = h.clone();
    let mut ts = vec![0.0];
    let mut points = vec![w.clone()];
    let mut vels = vec![v.clone()];
    for k in 0..steps {
        let a1 = acceleration(model, alpha, &w, &v)?;
        let (w2, v2) = (&w + &v * (0.5 * dt), &v + &a1 * (0.5 * dt));
        let a2 = acceleration(model, alpha, &w2, &v2)?;
        let (w3, v3) = (&w + &v2 * (0.5 * dt), &v + &a2 * (0.5 * dt));
        let a3 = acceleration(model, alpha, &w3, &v3)?;
        let (w4, v4) = (&w + &v3 * dt, &v + &a3 * dt);
        let a4 = acceleration(model, alpha, &w4, &v4)?;
        w += (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
        v += (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (dt / 6.0);
        model.check_domain(&w)?;
        ts.push(if k + 1 == steps { t_end } else { (k + 1) as f64 * dt });
        points.push(w.clone());
        vels.push(v.clone());
    }
    Ok(SampledPath { t: ts, points, velocities: Some(vels) })
}

/// `hᵀ G(ω) h` along an integrated path, for speed-conservation checks.
pub fn speeds(model: &PerturbedModel, path: &SampledPath) -> Result<Vec<f64>> {
    let vels = path.velocities.as_ref().ok_or(InfluenceError::DegenerateCurve)?;
    path.points
        .iter()
        .zip(vels)
        .map(|(w, v)| {
            let geo: GeometryAtPoint = geometry_at(model, w, 0.0)?;
            Ok(v.dot(&(&geo.g * v)))
        })
        .collect()
}
