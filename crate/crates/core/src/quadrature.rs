//! Adaptive Gauss–Kronrod (7, 15) quadrature on finite and infinite intervals.

use crate::error::{InfluenceError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs: f64,
}

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> Result<Segment> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        kronrod += w * (f1 + f2);
        abs += w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * h;
    if !value.is_finite() {
        return Err(InfluenceError::NonFiniteValue(format!("integrand on [{a}, {b}]")));
    }
    Ok(Segment { a, b, value, err: ((kronrod - gauss) * h).abs(), abs: abs * h.abs() })
}

/// Integrates `f` over `[a, b]` by global adaptive bisection. The stopping rule
/// is `err <= tol * max(|I|, ∫|f|)`; exceeding the interval cap is reported as
/// divergence.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, opts: QuadratureOptions) -> Result<f64> {
    let mut segments = vec![gk15(&mut f, a, b)?];
    loop {
        let value: f64 = segments.iter().map(|s| s.value).sum();
        let err: f64 = segments.iter().map(|s| s.err).sum();
        let abs: f64 = segments.iter().map(|s| s.abs).sum();
        if err <= opts.tol * value.abs().max(abs) || err < f64::MIN_POSITIVE {
            return Ok(value);
        }
        if segments.len() >= opts.max_intervals {
            return Err(InfluenceError::NormalizerDivergence(format!(
                "quadrature did not settle after {} intervals (error estimate {err:.3e})",
                segments.len()
            )));
        }
        let (worst, _) =
            segments.iter().enumerate().max_by(|x, y| x.1.err.total_cmp(&y.1.err)).expect("at least one segment");
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        segments.push(gk15(&mut f, s.a, mid)?);
        segments.push(gk15(&mut f, mid, s.b)?);
    }
}

/// Integrates over the whole real line through `x = t / (1 - t²)`.
pub fn integrate_real_line(mut f: impl FnMut(f64) -> f64, opts: QuadratureOptions) -> Result<f64> {
    integrate(
        |t| {
            let d = 1.0 - t * t;
            if d <= 0.0 {
                return 0.0;
            }
            let x = t / d;
            let v = f(x) * (1.0 + t * t) / (d * d);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        },
        -1.0,
        1.0,
        opts,
    )
}

/// Integrates over `[0, ∞)` through `x = t / (1 - t)`.
pub fn integrate_half_line(mut f: impl FnMut(f64) -> f64, opts: QuadratureOptions) -> Result<f64> {
    integrate(
        |t| {
            let d = 1.0 - t;
            if d <= 0.0 {
                return 0.0;
            }
            let v = f(t / d) / (d * d);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        },
        0.0,
        1.0,
        opts,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let o = QuadratureOptions::default();
        assert!((integrate_real_line(phi, o).unwrap() - 1.0).abs() < 1e-12);
        let m4 = integrate_real_line(|x| x.powi(4) * phi(x), o).unwrap();
        assert!((m4 - 3.0).abs() < 1e-10);
    }

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - x, 0.0, 2.0, QuadratureOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate_half_line(|x| (-x).exp(), QuadratureOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn growing_integrand_is_divergent() {
        let r = integrate_real_line(|x| (0.1 * x * x).exp(), QuadratureOptions::default());
        assert!(r.is_err());
    }
}
