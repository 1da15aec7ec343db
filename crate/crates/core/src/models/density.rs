//! Standardized base densities `p₀` (mean 0, variance 1) and the one-dimensional
//! components used by case-weight perturbations.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_distr::{Beta, Distribution, Exp, StandardNormal};

use crate::error::{InfluenceError, Result};
use crate::quadrature::{integrate_real_line, QuadratureOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseDensity {
    Gaussian,
    /// Logistic scaled to unit variance, scale `√3/π`.
    Logistic,
}

impl BaseDensity {
    fn logistic_scale() -> f64 {
        3.0_f64.sqrt() / PI
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseDensity::Gaussian => "gaussian",
            BaseDensity::Logistic => "logistic",
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            BaseDensity::Gaussian => -0.5 * x * x - 0.5 * LN_2PI,
            BaseDensity::Logistic => {
                let s = Self::logistic_scale();
                let u = (x / s).abs();
                -u - 2.0 * (-u).exp().ln_1p() - s.ln()
            }
        }
    }

    /// `ℓ₀'(x) = d log p₀ / dx`.
    pub fn score(&self, x: f64) -> f64 {
        match self {
            BaseDensity::Gaussian => -x,
            BaseDensity::Logistic => {
                let s = Self::logistic_scale();
                -(0.5 * x / s).tanh() / s
            }
        }
    }

    /// `ℓ₀''(x)`.
    pub fn score_deriv(&self, x: f64) -> f64 {
        match self {
            BaseDensity::Gaussian => -1.0,
            BaseDensity::Logistic => {
                let s = Self::logistic_scale();
                let c = (0.5 * x / s).cosh();
                -0.5 / (s * s * c * c)
            }
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            BaseDensity::Gaussian => StandardNormal.sample(rng),
            BaseDensity::Logistic => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                Self::logistic_scale() * (u / (1.0 - u)).ln()
            }
        }
    }

    /// A draw from the density proportional to `p₀(x)^ω`.
    pub fn sample_tilted(&self, omega: f64, rng: &mut dyn RngCore) -> f64 {
        match self {
            BaseDensity::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z / omega.sqrt()
            }
            BaseDensity::Logistic => {
                let u: f64 = Beta::new(omega, omega).expect("positive shape").sample(rng);
                let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                Self::logistic_scale() * (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        integrate_real_line(|x| f(x) * self.log_pdf(x).exp(), QuadratureOptions { tol: 1e-13, max_intervals: 4000 })
    }

    /// `E₀[ℓ₀'²]`, the Fisher information for location.
    pub fn location_information(&self) -> f64 {
        match self {
            BaseDensity::Gaussian => 1.0,
            BaseDensity::Logistic => self.expect(|x| self.score(x).powi(2)).expect("logistic moments are finite"),
        }
    }

    /// `E₀[ℓ₀'³]`.
    pub fn location_skewness(&self) -> f64 {
        match self {
            BaseDensity::Gaussian | BaseDensity::Logistic => 0.0,
        }
    }

    /// `(E₀[(1 + xℓ₀')²], E₀[(1 + xℓ₀')³])`.
    pub fn scale_moments(&self) -> (f64, f64) {
        match self {
            BaseDensity::Gaussian => (2.0, -8.0),
            BaseDensity::Logistic => {
                let a = |k: i32| self.expect(|x| (1.0 + x * self.score(x)).powi(k)).expect("finite");
                (a(2), a(3))
            }
        }
    }

    /// `log ∫ p₀^ω`.
    pub fn log_normalizer(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) {
            return Err(InfluenceError::DomainViolation { coordinate: 0, value: omega });
        }
        Ok(match self {
            BaseDensity::Gaussian => 0.5 * (1.0 - omega) * LN_2PI - 0.5 * omega.ln(),
            // ∫ p₀^ω = s^{1-ω} B(ω, ω)
            BaseDensity::Logistic => {
                (1.0 - omega) * Self::logistic_scale().ln() + 2.0 * libm::lgamma(omega) - libm::lgamma(2.0 * omega)
            }
        })
    }

    /// `(log c₀(ω), E_ω[log p₀], Var_ω[log p₀], κ₃)` under the tilted density
    /// `p₀^ω / c₀(ω)`.
    pub fn tilted_log_moments(&self, omega: f64) -> Result<TiltedMoments> {
        if !(omega > 0.0) {
            return Err(InfluenceError::DomainViolation { coordinate: 0, value: omega });
        }
        match self {
            BaseDensity::Gaussian => Ok(TiltedMoments {
                log_c: 0.5 * (1.0 - omega) * LN_2PI - 0.5 * omega.ln(),
                mean: -0.5 * LN_2PI - 0.5 / omega,
                var: 0.5 / (omega * omega),
                third: -1.0 / omega.powi(3),
            }),
            BaseDensity::Logistic => {
                let o = QuadratureOptions { tol: 1e-13, max_intervals: 4000 };
                // Center at the mode value so that exp() stays in range for large ω.
                let shift = self.log_pdf(0.0);
                let w = |x: f64| (omega * (self.log_pdf(x) - shift)).exp();
                let c = integrate_real_line(w, o)?;
                let mean = integrate_real_line(|x| self.log_pdf(x) * w(x), o)? / c;
                let central = |k: i32| integrate_real_line(|x| (self.log_pdf(x) - mean).powi(k) * w(x), o);
                Ok(TiltedMoments {
                    log_c: self.log_normalizer(omega).unwrap_or(c.ln() + omega * shift),
                    mean,
                    var: central(2)? / c,
                    third: central(3)? / c,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltedMoments {
    pub log_c: f64,
    pub mean: f64,
    pub var: f64,
    pub third: f64,
}

/// One observation's density `p(y; θ)` in a case-weight perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    LocationScale { base: BaseDensity, mu: f64, sigma: f64 },
    Exponential { rate: f64 },
}

impl Component {
    pub fn gaussian(mu: f64, sigma: f64) -> Self {
        Component::LocationScale { base: BaseDensity::Gaussian, mu, sigma }
    }

    /// `ℓ(y; θ) = log p(y; θ)`.
    pub fn log_density(&self, y: f64) -> f64 {
        match *self {
            Component::LocationScale { base, mu, sigma } => base.log_pdf((y - mu) / sigma) - sigma.ln(),
            Component::Exponential { rate } => {
                if y < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * y
                }
            }
        }
    }

    /// Moments of `ℓ(y; θ)` under `exp{ω ℓ(y; θ)} / c(ω; θ)`, with
    /// `log c(ω; θ)` in `log_c`.
    pub fn tilted(&self, omega: f64) -> Result<TiltedMoments> {
        if !(omega > 0.0) {
            return Err(InfluenceError::DomainViolation { coordinate: 0, value: omega });
        }
        match *self {
            Component::LocationScale { base, sigma, .. } => {
                let m = base.tilted_log_moments(omega)?;
                let ls = sigma.ln();
                Ok(TiltedMoments { log_c: m.log_c + (1.0 - omega) * ls, mean: m.mean - ls, var: m.var, third: m.third })
            }
            Component::Exponential { rate } => Ok(TiltedMoments {
                log_c: omega * rate.ln() - (omega * rate).ln(),
                mean: rate.ln() - 1.0 / omega,
                var: 1.0 / (omega * omega),
                third: -2.0 / omega.powi(3),
            }),
        }
    }

    /// `log c(ω; θ)` alone, without the tilted moments.
    pub fn log_normalizer(&self, omega: f64) -> Result<f64> {
        match *self {
            Component::LocationScale { base, sigma, .. } => {
                Ok(base.log_normalizer(omega)? + (1.0 - omega) * sigma.ln())
            }
            Component::Exponential { .. } => self.tilted(omega).map(|m| m.log_c),
        }
    }

    pub fn sample_tilted(&self, omega: f64, rng: &mut dyn RngCore) -> f64 {
        match *self {
            Component::LocationScale { base, mu, sigma } => mu + sigma * base.sample_tilted(omega, rng),
            Component::Exponential { rate } => Exp::new(omega * rate).expect("positive rate").sample(rng),
        }
    }
}
