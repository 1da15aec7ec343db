//! Perturbation schemes for independent observations: case weights,
//! variance (precision) perturbations, response shifts and explanatory
//! perturbations.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use super::density::{BaseDensity, Component};
use super::fit::{Family, ModelFit, ModelKind};
use super::likelihoods::{ExponentialLikelihood, IndepChannels, IndepLikelihood};
use crate::error::{InfluenceError, Result};
use crate::geometry::{ClosedGeometry, Domain, LoglikDerivatives, PerturbationScheme, PerturbedModel};
use crate::likelihood::ThetaLikelihood;
use crate::tensor::Tensor3;

/// How ω enters an independent-observation model.
#[derive(Debug, Clone, PartialEq)]
pub enum IndepPerturbation {
    /// `ℓ(ω) = Σ ω_i ℓ(y_i; θ) − Σ log c_i(ω_i; θ)`, `ω⁰ = 1`.
    CaseWeight,
    /// Standard deviation of unit `i` divided by `τ_i = (a_i + b_i ω_i)^r`.
    Precision { r: f64, a: Vec<f64>, b: Vec<f64> },
    /// `y_i + ω_i`, `ω⁰ = 0`.
    Response,
    /// `X + W S` with `W` an `n × q₁` matrix of perturbations, stored
    /// column-major as `ω_{k n + i}`.
    ExplanatoryFull { s: Vec<f64> },
    /// `X + diag(ω) 1 S`.
    ExplanatoryDiag { s: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationScaleScheme {
    CaseWeight,
    Variance,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceParametrization {
    /// `Var(ε_i) = σ²/ω_i`.
    InverseOmega,
    /// `Var(ε_1) = σ² k₀/(k₀ − 1 + φ_1)`, `Var(ε_i) = σ²/φ_i` otherwise.
    InverseOmegaWithK0(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplanatoryForm {
    Full,
    Diagonal,
}

#[derive(Debug)]
pub struct IndependentScheme {
    name: String,
    perturbation: IndepPerturbation,
    family: Family,
    components: Vec<Component>,
    y: DVector<f64>,
    x: DMatrix<f64>,
    theta: DVector<f64>,
    labels: Vec<String>,
    domain: Domain,
    null: DVector<f64>,
}

impl IndependentScheme {
    fn new(name: &str, fit: &ModelFit, perturbation: IndepPerturbation) -> Result<Self> {
        if !fit.kind.is_independent() {
            return Err(InfluenceError::Incompatible(format!("{name} needs independent observations")));
        }
        let y = fit.data.stacked_y();
        let x = fit.data.stacked_x();
        let n = y.len();
        let components: Vec<Component> = match fit.family {
            Family::Exponential => {
                if perturbation != IndepPerturbation::CaseWeight {
                    return Err(InfluenceError::UnsupportedFamily(format!("{name} with an exponential model")));
                }
                vec![Component::Exponential { rate: fit.theta[0] }; n]
            }
            f => {
                let base = f.base().expect("location-scale family");
                let beta = fit.beta();
                let sigma = fit.theta[fit.q1].sqrt();
                (0..n).map(|i| Component::LocationScale { base, mu: x.row(i).transpose().dot(&beta), sigma }).collect()
            }
        };
        let obs = fit.data.observation_labels();
        let (labels, domain, null) = match &perturbation {
            IndepPerturbation::CaseWeight => (obs, Domain::positive(n), DVector::from_element(n, 1.0)),
            IndepPerturbation::Precision { a, b, .. } => {
                if a.len() != n || b.len() != n || b.iter().any(|v| !(*v > 0.0)) {
                    return Err(InfluenceError::InvalidParameter("precision map needs b_i > 0 for every unit".into()));
                }
                let lower = a.iter().zip(b).map(|(a, b)| -a / b).collect();
                (obs, Domain { lower, upper: vec![f64::INFINITY; n] }, DVector::from_fn(n, |i, _| (1.0 - a[i]) / b[i]))
            }
            IndepPerturbation::Response | IndepPerturbation::ExplanatoryDiag { .. } => {
                (obs, Domain::unbounded(n), DVector::zeros(n))
            }
            IndepPerturbation::ExplanatoryFull { s } => {
                let labels = (0..s.len()).flat_map(|k| obs.iter().map(move |l| format!("x{}:{l}", k + 1))).collect();
                let p = n * s.len();
                (labels, Domain::unbounded(p), DVector::zeros(p))
            }
        };
        Ok(Self {
            name: name.to_string(),
            perturbation,
            family: fit.family,
            components,
            y,
            x,
            theta: fit.theta.clone(),
            labels,
            domain,
            null,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn base(&self) -> BaseDensity {
        self.family.base().expect("location-scale family")
    }

    fn q1(&self) -> usize {
        self.x.ncols()
    }

    fn sigma(&self) -> f64 {
        self.theta[self.q1()].sqrt()
    }

    fn mu(&self, i: usize) -> f64 {
        match self.components[i] {
            Component::LocationScale { mu, .. } => mu,
            Component::Exponential { rate } => 1.0 / rate,
        }
    }

    /// `Σ_k s_k β_k`.
    fn s_beta(s: &[f64], theta: &DVector<f64>) -> Vec<f64> {
        s.iter().enumerate().map(|(k, sk)| sk * theta[k]).collect()
    }

    /// The mean of unit `i` after the explanatory perturbation.
    fn shifted_mean(&self, omega: &DVector<f64>, i: usize) -> f64 {
        let n = self.n();
        match &self.perturbation {
            IndepPerturbation::ExplanatoryFull { s } => {
                self.mu(i)
                    + Self::s_beta(s, &self.theta).iter().enumerate().map(|(k, sb)| sb * omega[k * n + i]).sum::<f64>()
            }
            IndepPerturbation::ExplanatoryDiag { s } => {
                self.mu(i) + Self::s_beta(s, &self.theta).iter().sum::<f64>() * omega[i]
            }
            _ => self.mu(i),
        }
    }

    fn tau(r: f64, a: f64, b: f64, w: f64) -> f64 {
        (a + b * w).powf(r)
    }

    fn perturbed_design(&self, omega: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut x = self.x.clone();
        match &self.perturbation {
            IndepPerturbation::ExplanatoryFull { s } => {
                for (k, sk) in s.iter().enumerate() {
                    for i in 0..n {
                        x[(i, k)] += sk * omega[k * n + i];
                    }
                }
            }
            IndepPerturbation::ExplanatoryDiag { s } => {
                for (k, sk) in s.iter().enumerate() {
                    for i in 0..n {
                        x[(i, k)] += sk * omega[i];
                    }
                }
            }
            _ => {}
        }
        x
    }
}

impl PerturbationScheme for IndependentScheme {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.null.len()
    }

    fn null_point(&self) -> DVector<f64> {
        self.null.clone()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn observed(&self) -> &DVector<f64> {
        &self.y
    }

    fn log_density(&self, omega: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = self.n();
        match &self.perturbation {
            IndepPerturbation::CaseWeight => (0..n)
                .map(|i| {
                    let c = &self.components[i];
                    match c.log_normalizer(omega[i]) {
                        Ok(log_c) => omega[i] * c.log_density(y[i]) - log_c,
                        Err(_) => f64::NAN,
                    }
                })
                .sum(),
            IndepPerturbation::Precision { r, a, b } => {
                let (base, sigma) = (self.base(), self.sigma());
                (0..n)
                    .map(|i| {
                        let t = Self::tau(*r, a[i], b[i], omega[i]);
                        t.ln() - sigma.ln() + base.log_pdf(t * (y[i] - self.mu(i)) / sigma)
                    })
                    .sum()
            }
            IndepPerturbation::Response => {
                let (base, sigma) = (self.base(), self.sigma());
                (0..n).map(|i| base.log_pdf((y[i] + omega[i] - self.mu(i)) / sigma) - sigma.ln()).sum()
            }
            IndepPerturbation::ExplanatoryFull { .. } | IndepPerturbation::ExplanatoryDiag { .. } => {
                let (base, sigma) = (self.base(), self.sigma());
                (0..n).map(|i| base.log_pdf((y[i] - self.shifted_mean(omega, i)) / sigma) - sigma.ln()).sum()
            }
        }
    }

    fn closed_form(&self, omega: &DVector<f64>) -> Option<Result<ClosedGeometry>> {
        let n = self.n();
        Some((|| match &self.perturbation {
            IndepPerturbation::CaseWeight => {
                let mut g = Vec::with_capacity(n);
                let mut t = Vec::with_capacity(n);
                for (i, c) in self.components.iter().enumerate() {
                    let m = c
                        .tilted(omega[i])
                        .map_err(|_| InfluenceError::DomainViolation { coordinate: i, value: omega[i] })?;
                    g.push(m.var);
                    t.push(m.third);
                }
                // d Var/dω equals the third cumulant for an exponential family in ω.
                Ok(ClosedGeometry::diagonal(&g, &t, &t))
            }
            IndepPerturbation::Precision { r, a, b } => {
                let (a2, a3) = self.base().scale_moments();
                let mut g = Vec::with_capacity(n);
                let mut t = Vec::with_capacity(n);
                let mut dg = Vec::with_capacity(n);
                for i in 0..n {
                    let w = a[i] + b[i] * omega[i];
                    let rb = r * b[i];
                    g.push(rb * rb * a2 / (w * w));
                    t.push(rb.powi(3) * a3 / w.powi(3));
                    dg.push(-2.0 * rb * rb * b[i] * a2 / w.powi(3));
                }
                Ok(ClosedGeometry::diagonal(&g, &t, &dg))
            }
            IndepPerturbation::Response => {
                let sigma = self.sigma();
                let info = self.base().location_information() / (sigma * sigma);
                let skew = self.base().location_skewness() / sigma.powi(3);
                Ok(ClosedGeometry {
                    g: DMatrix::from_diagonal_element(n, n, info),
                    t: Tensor3::diagonal(&vec![skew; n]),
                    gamma0: Tensor3::zeros(n),
                })
            }
            IndepPerturbation::ExplanatoryDiag { s } => {
                let sigma = self.sigma();
                let sb: f64 = Self::s_beta(s, &self.theta).iter().sum();
                let info = self.base().location_information() * sb * sb / (sigma * sigma);
                let skew = -self.base().location_skewness() * sb.powi(3) / sigma.powi(3);
                Ok(ClosedGeometry {
                    g: DMatrix::from_diagonal_element(n, n, info),
                    t: Tensor3::diagonal(&vec![skew; n]),
                    gamma0: Tensor3::zeros(n),
                })
            }
            IndepPerturbation::ExplanatoryFull { s } => {
                let sigma = self.sigma();
                let sb = Self::s_beta(s, &self.theta);
                let q = sb.len();
                let p = n * q;
                let info = self.base().location_information() / (sigma * sigma);
                let skew = -self.base().location_skewness() / sigma.powi(3);
                let mut g = DMatrix::zeros(p, p);
                let mut t = Tensor3::zeros(p);
                for i in 0..n {
                    for k in 0..q {
                        for l in 0..q {
                            g[(k * n + i, l * n + i)] = info * sb[k] * sb[l];
                            if skew != 0.0 {
                                for m in 0..q {
                                    t.set(k * n + i, l * n + i, m * n + i, skew * sb[k] * sb[l] * sb[m]);
                                }
                            }
                        }
                    }
                }
                Ok(ClosedGeometry { g, t, gamma0: Tensor3::zeros(p) })
            }
        })())
    }

    fn has_sampler(&self) -> bool {
        true
    }

    fn sample(&self, omega: &DVector<f64>, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let n = self.n();
        let y = match &self.perturbation {
            IndepPerturbation::CaseWeight => {
                DVector::from_fn(n, |i, _| self.components[i].sample_tilted(omega[i], rng))
            }
            IndepPerturbation::Precision { r, a, b } => {
                let (base, sigma) = (self.base(), self.sigma());
                DVector::from_fn(n, |i, _| self.mu(i) + sigma * base.sample(rng) / Self::tau(*r, a[i], b[i], omega[i]))
            }
            IndepPerturbation::Response => {
                let (base, sigma) = (self.base(), self.sigma());
                DVector::from_fn(n, |i, _| self.mu(i) - omega[i] + sigma * base.sample(rng))
            }
            IndepPerturbation::ExplanatoryFull { .. } | IndepPerturbation::ExplanatoryDiag { .. } => {
                let (base, sigma) = (self.base(), self.sigma());
                DVector::from_fn(n, |i, _| self.shifted_mean(omega, i) + sigma * base.sample(rng))
            }
        };
        Some(y)
    }

    fn likelihood(&self, omega: &DVector<f64>) -> Option<Box<dyn ThetaLikelihood>> {
        if self.family == Family::Exponential {
            return Some(Box::new(ExponentialLikelihood { y: self.y.clone(), kappa: omega.clone() }));
        }
        let mut lik = IndepLikelihood::unperturbed(self.base(), self.y.clone(), self.perturbed_design(omega));
        match &self.perturbation {
            IndepPerturbation::CaseWeight => lik.kappa = omega.clone(),
            IndepPerturbation::Precision { r, a, b } => {
                lik.tau = DVector::from_fn(self.n(), |i, _| Self::tau(*r, a[i], b[i], omega[i]))
            }
            IndepPerturbation::Response => lik.offset = omega.clone(),
            _ => {}
        }
        Some(Box::new(lik))
    }

    fn theta_hat(&self) -> Option<DVector<f64>> {
        Some(self.theta.clone())
    }

    fn delta(&self) -> Option<Result<DMatrix<f64>>> {
        let n = self.n();
        if self.family == Family::Exponential {
            return Some(Ok(DMatrix::from_fn(1, n, |_, i| -self.y[i])));
        }
        let q1 = self.q1();
        let ch = IndepChannels { base: self.base(), beta: self.theta.rows(0, q1).into_owned(), sigma2: self.theta[q1] };
        let sigma = self.sigma();
        let unit = |i: usize| (self.x.row(i).transpose(), (self.y[i] - self.mu(i)) / sigma);
        let cols: Vec<DVector<f64>> = match &self.perturbation {
            IndepPerturbation::CaseWeight => (0..n)
                .map(|i| {
                    let (x, z) = unit(i);
                    ch.kappa(&x, z)
                })
                .collect(),
            IndepPerturbation::Precision { r, b, .. } => (0..n)
                .map(|i| {
                    let (x, z) = unit(i);
                    ch.tau(&x, z) * (r * b[i])
                })
                .collect(),
            IndepPerturbation::Response => (0..n)
                .map(|i| {
                    let (x, z) = unit(i);
                    ch.offset(&x, z)
                })
                .collect(),
            IndepPerturbation::ExplanatoryFull { s } => s
                .iter()
                .enumerate()
                .flat_map(|(k, sk)| (0..n).map(move |i| (k, *sk, i)))
                .map(|(k, sk, i)| {
                    let (x, z) = unit(i);
                    ch.design(&x, z, k) * sk
                })
                .collect(),
            IndepPerturbation::ExplanatoryDiag { s } => (0..n)
                .map(|i| {
                    let (x, z) = unit(i);
                    s.iter().enumerate().fold(DVector::zeros(q1 + 1), |acc, (k, sk)| acc + ch.design(&x, z, k) * *sk)
                })
                .collect(),
        };
        Some(Ok(DMatrix::from_columns(&cols)))
    }

    fn loglik_derivatives(&self) -> Option<Result<LoglikDerivatives>> {
        if self.perturbation != IndepPerturbation::CaseWeight {
            return None;
        }
        Some((|| {
            let n = self.n();
            let mut grad = DVector::zeros(n);
            let mut hess = DMatrix::zeros(n, n);
            let mut f = 0.0;
            for (i, c) in self.components.iter().enumerate() {
                let m = c.tilted(1.0)?;
                let l = c.log_density(self.y[i]);
                f += l;
                grad[i] = l - m.mean;
                hess[(i, i)] = -m.var;
            }
            Ok((f, grad, hess))
        })())
    }
}

fn require_kind(fit: &ModelFit, allowed: &[ModelKind], what: &str) -> Result<()> {
    if allowed.contains(&fit.kind) {
        Ok(())
    } else {
        Err(InfluenceError::Incompatible(format!("{what} is not defined for a {} model", fit.kind.tag())))
    }
}

/// Case-weight perturbation of independent observations.
pub fn case_weight_scheme(fit: &ModelFit) -> Result<PerturbedModel> {
    require_kind(
        fit,
        &[ModelKind::IidParametric, ModelKind::LocationScale, ModelKind::LinearRegression],
        "case_weight",
    )?;
    Ok(PerturbedModel::from_scheme(IndependentScheme::new("case_weight", fit, IndepPerturbation::CaseWeight)?))
}

/// The three location-scale perturbations. Variance uses `Var(y_i) = σ²/ω_i²`.
pub fn location_scale_scheme(fit: &ModelFit, which: LocationScaleScheme) -> Result<PerturbedModel> {
    require_kind(
        fit,
        &[ModelKind::LocationScale, ModelKind::LinearRegression, ModelKind::IidParametric],
        "ls schemes",
    )?;
    if fit.family.base().is_none() {
        return Err(InfluenceError::UnsupportedFamily(fit.family.tag().into()));
    }
    let n = fit.data.total();
    let scheme = match which {
        LocationScaleScheme::CaseWeight => {
            IndependentScheme::new("ls_case_weight", fit, IndepPerturbation::CaseWeight)?
        }
        LocationScaleScheme::Variance => IndependentScheme::new(
            "ls_variance",
            fit,
            IndepPerturbation::Precision { r: 1.0, a: vec![0.0; n], b: vec![1.0; n] },
        )?,
        LocationScaleScheme::Response => IndependentScheme::new("ls_response", fit, IndepPerturbation::Response)?,
    };
    Ok(PerturbedModel::from_scheme(scheme))
}

/// Error-variance perturbation of a linear regression.
pub fn regression_variance_scheme(fit: &ModelFit, parametrization: VarianceParametrization) -> Result<PerturbedModel> {
    require_kind(fit, &[ModelKind::LinearRegression], "reg_variance")?;
    if fit.family.base().is_none() {
        return Err(InfluenceError::UnsupportedFamily(fit.family.tag().into()));
    }
    let n = fit.data.total();
    let (mut a, mut b) = (vec![0.0; n], vec![1.0; n]);
    let name = match parametrization {
        VarianceParametrization::InverseOmega => "reg_variance",
        VarianceParametrization::InverseOmegaWithK0(k0) => {
            if !(k0 > 0.0) {
                return Err(InfluenceError::InvalidParameter(format!("k0 must be positive, got {k0}")));
            }
            a[0] = 1.0 - 1.0 / k0;
            b[0] = 1.0 / k0;
            "reg_variance_k0"
        }
    };
    Ok(PerturbedModel::from_scheme(IndependentScheme::new(name, fit, IndepPerturbation::Precision { r: 0.5, a, b })?))
}

/// Perturbation of the explanatory variables with column scales `s`.
pub fn explanatory_scheme(fit: &ModelFit, form: ExplanatoryForm, s: &[f64]) -> Result<PerturbedModel> {
    require_kind(fit, &[ModelKind::LinearRegression], "explanatory perturbation")?;
    if fit.family.base().is_none() {
        return Err(InfluenceError::UnsupportedFamily(fit.family.tag().into()));
    }
    if s.len() != fit.q1 {
        return Err(InfluenceError::DimensionMismatch { expected: fit.q1, got: s.len() });
    }
    if s.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return Err(InfluenceError::InvalidParameter("explanatory scales must be finite and nonzero".into()));
    }
    let beta = fit.beta();
    let terms: Vec<f64> = s.iter().zip(beta.iter()).map(|(a, b)| a * b).collect();
    let sb: f64 = terms.iter().sum();
    let (name, pert) = match form {
        ExplanatoryForm::Full => ("explanatory_full", IndepPerturbation::ExplanatoryFull { s: s.to_vec() }),
        ExplanatoryForm::Diagonal => {
            if sb.abs() <= 1e-14 * terms.iter().map(|v| v.abs()).sum::<f64>() {
                return Err(InfluenceError::ZeroDirection);
            }
            ("explanatory_diag", IndepPerturbation::ExplanatoryDiag { s: s.to_vec() })
        }
    };
    Ok(PerturbedModel::from_scheme(IndependentScheme::new(name, fit, pert)?))
}
