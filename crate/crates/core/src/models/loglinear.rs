//! Log-linear expansion perturbation `p₀(y) exp{Σ ω_j ψ_j(y)} / c(ω)` of an
//! i.i.d. location-scale model with θ held fixed.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::density::BaseDensity;
use super::fit::{ModelFit, ModelKind};
use crate::error::{InfluenceError, Result};
use crate::geometry::{ClosedGeometry, Domain, LoglikDerivatives, PerturbationScheme, PerturbedModel};
use crate::quadrature::{integrate_real_line, QuadratureOptions};
use crate::tensor::Tensor3;

pub type BasisFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Basis functions `ψ_j` of the standardized residual `z = (y − μ)/σ`.
#[derive(Clone)]
pub struct LoglinearBasis {
    pub names: Vec<String>,
    pub funcs: Vec<BasisFn>,
}

impl fmt::Debug for LoglinearBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoglinearBasis").field("names", &self.names).finish()
    }
}

/// Probabilists' Hermite polynomial `He_k`.
pub fn hermite(k: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        (prev, cur) = (cur, z * cur - j as f64 * prev);
    }
    cur
}

impl LoglinearBasis {
    /// `He_1, …, He_m`, orthogonal under the standard normal.
    pub fn hermite(m: usize) -> Self {
        let names = (1..=m).map(|k| format!("He{k}")).collect();
        let funcs = (1..=m).map(|k| Arc::new(move |z: f64| hermite(k, z)) as BasisFn).collect();
        Self { names, funcs }
    }

    pub fn custom(names: Vec<String>, funcs: Vec<BasisFn>) -> Result<Self> {
        if names.len() != funcs.len() || funcs.is_empty() {
            return Err(InfluenceError::InvalidParameter("basis needs one name per function".into()));
        }
        Ok(Self { names, funcs })
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    fn eval(&self, z: f64) -> Vec<f64> {
        self.funcs.iter().map(|f| f(z)).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoglinearOptions {
    /// The domain is the box `(−w, w)^m`.
    pub half_width: f64,
    pub orthogonality_tol: f64,
    pub quadrature: QuadratureOptions,
}

impl Default for LoglinearOptions {
    fn default() -> Self {
        Self {
            half_width: 0.25,
            orthogonality_tol: 1e-6,
            quadrature: QuadratureOptions { tol: 1e-12, max_intervals: 4000 },
        }
    }
}

/// Cumulants of `ψ(z)` under the tilted density.
#[derive(Debug, Clone)]
pub struct TiltedBasisMoments {
    pub log_c: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub third: Tensor3,
}

#[derive(Debug)]
pub struct LoglinearScheme {
    base: BaseDensity,
    basis: LoglinearBasis,
    z: Vec<f64>,
    log_p0: f64,
    y: DVector<f64>,
    mu: DVector<f64>,
    sigma: f64,
    domain: Domain,
    opts: LoglinearOptions,
}

impl LoglinearScheme {
    fn n(&self) -> usize {
        self.z.len()
    }

    pub fn tilted(&self, omega: &DVector<f64>) -> Result<TiltedBasisMoments> {
        tilted_moments(self.base, &self.basis, omega, self.opts.quadrature)
    }

    /// `ψ̄_j = Σ_i ψ_j(z_i) / n`.
    pub fn psi_bar(&self) -> DVector<f64> {
        let m = self.basis.len();
        let mut s = DVector::zeros(m);
        for &z in &self.z {
            s += DVector::from_vec(self.basis.eval(z));
        }
        s / self.n() as f64
    }
}

pub fn tilted_moments(
    base: BaseDensity,
    basis: &LoglinearBasis,
    omega: &DVector<f64>,
    opts: QuadratureOptions,
) -> Result<TiltedBasisMoments> {
    let m = basis.len();
    let weight = |z: f64| -> f64 {
        let psi = basis.eval(z);
        let e: f64 = psi.iter().zip(omega.iter()).map(|(p, w)| p * w).sum::<f64>() + base.log_pdf(z);
        e.exp()
    };
    let div =
        |e: InfluenceError| InfluenceError::NormalizerDivergence(format!("c(ω) at ω = {:?}: {e}", omega.as_slice()));
    let c = integrate_real_line(weight, opts).map_err(div)?;
    if !(c.is_finite() && c > 0.0) {
        return Err(InfluenceError::NormalizerDivergence(format!("c(ω) = {c} at ω = {:?}", omega.as_slice())));
    }
    let mut mean = DVector::zeros(m);
    for j in 0..m {
        mean[j] = integrate_real_line(|z| (basis.funcs[j])(z) * weight(z), opts).map_err(div)? / c;
    }
    let centered = |j: usize, z: f64| (basis.funcs[j])(z) - mean[j];
    let mut cov = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let v = integrate_real_line(|z| centered(j, z) * centered(k, z) * weight(z), opts).map_err(div)? / c;
            cov[(j, k)] = v;
            cov[(k, j)] = v;
        }
    }
    let mut third = Tensor3::zeros(m);
    for j in 0..m {
        for k in j..m {
            for l in k..m {
                let v = integrate_real_line(|z| centered(j, z) * centered(k, z) * centered(l, z) * weight(z), opts)
                    .map_err(div)?
                    / c;
                for (a, b, d) in [(j, k, l), (j, l, k), (k, j, l), (k, l, j), (l, j, k), (l, k, j)] {
                    third.set(a, b, d, v);
                }
            }
        }
    }
    Ok(TiltedBasisMoments { log_c: c.ln(), mean, cov, third })
}

impl PerturbationScheme for LoglinearScheme {
    fn name(&self) -> &str {
        "loglinear"
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn null_point(&self) -> DVector<f64> {
        DVector::zeros(self.basis.len())
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn labels(&self) -> Vec<String> {
        self.basis.names.clone()
    }

    fn observed(&self) -> &DVector<f64> {
        &self.y
    }

    fn log_density(&self, omega: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let Ok(t) = self.tilted_log_c(omega) else {
            return f64::NAN;
        };
        (0..y.len())
            .map(|i| {
                let z = (y[i] - self.mu[i]) / self.sigma;
                let lin: f64 = self.basis.eval(z).iter().zip(omega.iter()).map(|(p, w)| p * w).sum();
                self.base.log_pdf(z) - self.sigma.ln() + lin - t
            })
            .sum()
    }

    fn closed_form(&self, omega: &DVector<f64>) -> Option<Result<ClosedGeometry>> {
        Some(self.tilted(omega).map(|t| {
            let n = self.n() as f64;
            let tt = t.third.scale(n);
            ClosedGeometry { g: t.cov * n, gamma0: tt.scale(0.5), t: tt }
        }))
    }

    fn loglik_derivatives(&self) -> Option<Result<LoglikDerivatives>> {
        Some(self.tilted(&self.null_point()).map(|t| {
            let n = self.n() as f64;
            ((self.log_p0), (self.psi_bar() - t.mean) * n, -t.cov * n)
        }))
    }
}

impl LoglinearScheme {
    fn tilted_log_c(&self, omega: &DVector<f64>) -> Result<f64> {
        let weight = |z: f64| -> f64 {
            let e: f64 =
                self.basis.eval(z).iter().zip(omega.iter()).map(|(p, w)| p * w).sum::<f64>() + self.base.log_pdf(z);
            e.exp()
        };
        let c = integrate_real_line(weight, self.opts.quadrature)?;
        Ok(c.ln())
    }
}

/// Builds the raw log-linear scheme. The basis must be orthogonal to `1` and
/// mutually orthogonal under `p₀`, and `c(ω)` must be finite on the domain box.
pub fn loglinear_scheme(fit: &ModelFit, basis: LoglinearBasis, opts: LoglinearOptions) -> Result<PerturbedModel> {
    if !matches!(fit.kind, ModelKind::IidParametric | ModelKind::LocationScale) {
        return Err(InfluenceError::Incompatible(format!("loglinear is not defined for a {} model", fit.kind.tag())));
    }
    let base = fit.family.base().ok_or_else(|| InfluenceError::UnsupportedFamily(fit.family.tag().into()))?;
    let m = basis.len();
    if m == 0 {
        return Err(InfluenceError::InvalidParameter("empty basis".into()));
    }
    let q = opts.quadrature;
    let e = |f: &dyn Fn(f64) -> f64| base.expect(f);
    let sq: Vec<f64> = (0..m).map(|j| e(&|z| (basis.funcs[j])(z).powi(2))).collect::<Result<_>>()?;
    for j in 0..m {
        if !(sq[j] > 0.0 && sq[j].is_finite()) {
            return Err(InfluenceError::OrthogonalityViolation(format!("E₀ψ_{}² = {}", j + 1, sq[j])));
        }
        let mean = e(&|z| (basis.funcs[j])(z))?;
        if mean.abs() > opts.orthogonality_tol * sq[j].sqrt() {
            return Err(InfluenceError::OrthogonalityViolation(format!("E₀ψ_{} = {mean:.3e}", j + 1)));
        }
        for k in 0..j {
            let v = e(&|z| (basis.funcs[j])(z) * (basis.funcs[k])(z))?;
            if v.abs() > opts.orthogonality_tol * (sq[j] * sq[k]).sqrt() {
                return Err(InfluenceError::OrthogonalityViolation(format!("E₀ψ_{}ψ_{} = {v:.3e}", k + 1, j + 1)));
            }
        }
    }
    let w = opts.half_width;
    if !(w > 0.0) {
        return Err(InfluenceError::InvalidParameter("domain half-width must be positive".into()));
    }
    // c(ω) is log-convex, so finiteness at the corners of the box implies it inside.
    let corners = if m <= 10 { 1usize << m } else { 2 * m };
    for idx in 0..corners {
        let corner = if m <= 10 {
            DVector::from_fn(m, |j, _| if idx >> j & 1 == 1 { w } else { -w })
        } else {
            DVector::from_fn(m, |j, _| {
                if j == idx / 2 {
                    if idx % 2 == 0 {
                        w
                    } else {
                        -w
                    }
                } else {
                    0.0
                }
            })
        };
        tilted_moments(base, &basis, &corner, q)?;
    }
    let y = fit.data.stacked_y();
    let x = fit.data.stacked_x();
    let mu = &x * fit.beta();
    let sigma = fit.theta[fit.q1].sqrt();
    let z: Vec<f64> = (0..y.len()).map(|i| (y[i] - mu[i]) / sigma).collect();
    let log_p0 = z.iter().map(|&zi| base.log_pdf(zi) - sigma.ln()).sum();
    Ok(PerturbedModel::from_scheme(LoglinearScheme {
        base,
        basis,
        z,
        log_p0,
        y,
        mu,
        sigma,
        domain: Domain { lower: vec![-w; m], upper: vec![w; m] },
        opts,
    }))
}
