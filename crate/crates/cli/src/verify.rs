//! Closed-form-versus-oracle checks for a configured scheme and objective.

use std::fmt;

use influence_core::geometry::{geodesic_trace, geometry_at, SampledPath};
use influence_core::models::{ld_probe, likelihood_displacement, neg_rss, ClusteredDataset, HessianForm, RefitOptions};
use influence_core::oracle::{fd_probe, geodesic_residual, mc_metric, sidak_z, OracleConfig};
use influence_core::{ObjectiveProbe, PerturbedModel};
use nalgebra::{DMatrix, DVector};

use crate::analyze::{build_scheme, fit, interest, objective_probe, variance_parametrization};
use crate::config::{AnalysisConfig, Objective};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Fail,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// What is compared against what.
    pub quantity: String,
    pub tolerance: f64,
    pub observed: f64,
    pub outcome: Outcome,
}

impl Check {
    fn compare(name: &str, quantity: &str, observed: f64, tolerance: f64) -> Self {
        let outcome = if observed <= tolerance { Outcome::Pass } else { Outcome::Fail };
        Self { name: name.into(), quantity: quantity.into(), tolerance, observed, outcome }
    }

    fn skipped(name: &str, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            quantity: String::new(),
            tolerance: f64::NAN,
            observed: f64::NAN,
            outcome: Outcome::Skipped(why.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub scheme: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != Outcome::Fail)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scheme {}", self.scheme)?;
        writeln!(f, "{:<10} {:<12} {:<44} {:>12} {:>12}", "result", "check", "quantity", "observed", "tolerance")?;
        for c in &self.checks {
            match &c.outcome {
                Outcome::Skipped(why) => writeln!(f, "{:<10} {:<12} skipped: {why}", "SKIP", c.name)?,
                o => writeln!(
                    f,
                    "{:<10} {:<12} {:<44} {:>12.3e} {:>12.3e}",
                    if *o == Outcome::Pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.quantity,
                    c.observed,
                    c.tolerance
                )?,
            }
        }
        Ok(())
    }
}

/// Test hooks for negative controls.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOptions {
    /// Adds an error to one entry of the closed-form Γ⁰ before it is compared.
    pub corrupt_gamma: bool,
}

fn metric_check(model: &PerturbedModel, cfg: &OracleConfig) -> Result<Check> {
    const NAME: &str = "metric";
    if !model.has_sampler() {
        return Ok(Check::skipped(NAME, "scheme has no sampler"));
    }
    let w0 = model.null_point();
    let g = geometry_at(model, &w0, 0.0)?.g;
    let mc = mc_metric(model, &w0, cfg)?;
    let (z, exact) = mc.z_scores(&g);
    let p = g.nrows();
    let bound = sidak_z(p * (p + 1) / 2, 3.0);
    let scale = g.amax().max(f64::MIN_POSITIVE);
    // Entries whose products are constant must agree to rounding.
    let observed = if exact > 1e-8 * scale { f64::INFINITY } else { z };
    Ok(Check::compare(NAME, "G vs Monte Carlo, max |z|", observed, bound))
}

/// `Γ⁰_{ij,k}` against the Levi-Civita symbols `½(∂_i g_jk + ∂_j g_ik − ∂_k g_ij)`
/// of the closed-form metric, by central differences.
fn connection_check(model: &PerturbedModel, opts: VerifyOptions) -> Result<Check> {
    const NAME: &str = "connection";
    if !model.has_closed_form() {
        return Ok(Check::skipped(NAME, "no closed-form geometry"));
    }
    let w0 = model.null_point();
    let p = model.dim();
    let geo = geometry_at(model, &w0, 0.0)?;
    let mut gamma = geo.gamma0.clone();
    if opts.corrupt_gamma {
        gamma.set(0, 0, 0, gamma.get(0, 0, 0) + 0.1 * (1.0 + geo.g.amax()));
    }
    let dg: Vec<DMatrix<f64>> = (0..p)
        .map(|k| {
            let h = 1e-5 * w0[k].abs().max(1.0);
            let (mut a, mut b) = (w0.clone(), w0.clone());
            a[k] += h;
            b[k] -= h;
            Ok((geometry_at(model, &a, 0.0)?.g - geometry_at(model, &b, 0.0)?.g) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = geo.g.amax();
    for i in 0..p {
        for j in 0..p {
            for k in 0..p {
                let lc = 0.5 * (dg[i][(j, k)] + dg[j][(i, k)] - dg[k][(i, j)]);
                worst = worst.max((gamma.get(i, j, k) - lc).abs());
                scale = scale.max(lc.abs());
            }
        }
    }
    Ok(Check::compare(NAME, "Γ⁰ vs metric derivatives, rel", worst / scale.max(f64::MIN_POSITIVE), 1e-5))
}

fn probe_checks(
    cfg: &AnalysisConfig,
    fit: &influence_core::models::ModelFit,
    model: &PerturbedModel,
    oracle: &OracleConfig,
) -> Result<Vec<Check>> {
    let w0 = model.null_point();
    let rel = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() / a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    let out = match cfg.objective {
        Objective::NegRss => {
            let param = variance_parametrization(cfg);
            let closed = objective_probe(cfg, fit, model)?;
            let f = |w: &DVector<f64>| neg_rss(fit, param, &model.to_base(w));
            let fd = fd_probe(&f, &w0, oracle)?;
            vec![
                Check::compare("gradient", "∇(−RSS) vs finite differences", (&closed.grad - &fd.grad).amax(), 1e-5),
                Check::compare("hessian", "H(−RSS) vs finite differences, rel", rel(&closed.hess, &fd.hess), 1e-5),
            ]
        }
        Objective::LoglikRatio => {
            let closed = objective_probe(cfg, fit, model)?;
            let l0 = model.loglik(&w0);
            let f = |w: &DVector<f64>| Ok(model.loglik(w) - l0);
            let fd = fd_probe(&f, &w0, oracle)?;
            vec![
                Check::compare("gradient", "∇ℓ ratio vs finite differences", (&closed.grad - &fd.grad).amax(), 1e-5),
                Check::compare("hessian", "Hℓ ratio vs finite differences, rel", rel(&closed.hess, &fd.hess), 1e-4),
            ]
        }
        ld => {
            let which = interest(ld).expect("LD objective");
            let f = |w: &DVector<f64>| likelihood_displacement(fit, model, w, which, RefitOptions::default());
            let fd = fd_probe(&f, &w0, &OracleConfig { fd_rel_step: 1e-3, ..*oracle })?;
            let observed: ObjectiveProbe = ld_probe(fit, model, which, HessianForm::Observed)?;
            vec![
                Check::compare("gradient", "|∇LD| by finite differences", fd.grad.norm(), 1e-5),
                Check::compare("hessian", "H_LD (observed −L̈) vs refits, rel", rel(&observed.hess, &fd.hess), 1e-3),
            ]
        }
    };
    Ok(out)
}

fn geodesic_check(model: &PerturbedModel, alpha: f64, oracle: &OracleConfig) -> Result<Check> {
    const NAME: &str = "geodesic";
    if !model.has_closed_form() {
        return Ok(Check::skipped(NAME, "no closed-form geometry"));
    }
    let w0 = model.null_point();
    let geo = geometry_at(model, &w0, alpha)?;
    let ones = DVector::from_element(model.dim(), 1.0);
    let h = &ones * (0.2 / ones.dot(&(&geo.g * &ones)).sqrt());
    let flat = geo.gamma_alpha.is_zero();
    let steps = oracle.ode_steps_per_unit.max(10);
    let (path, tol, what) = if flat {
        (SampledPath::from_fn(0.0, 1.0, steps, |t| &w0 + &h * t)?, 1e-8, "straight-line residual (flat)")
    } else {
        (geodesic_trace(model, alpha, &h, 1.0, steps)?, 1e-5, "traced geodesic residual")
    };
    Ok(Check::compare(NAME, what, geodesic_residual(model, &path, alpha, oracle)?, tol))
}

pub fn run(cfg: &AnalysisConfig, data: &ClusteredDataset, opts: VerifyOptions) -> Result<VerifyReport> {
    cfg.validate()?;
    let fit = fit(cfg, data)?;
    let model = build_scheme(cfg, &fit)?;
    let oracle = OracleConfig { mc_draws: cfg.mc_draws, ..OracleConfig::new(cfg.seed) };
    oracle.validate()?;
    let mut checks = Vec::new();
    let t = &cfg.oracle;
    checks.push(if t.metric { metric_check(&model, &oracle)? } else { Check::skipped("metric", "disabled") });
    checks.push(if t.connection { connection_check(&model, opts)? } else { Check::skipped("connection", "disabled") });
    if t.probe {
        checks.extend(probe_checks(cfg, &fit, &model, &oracle)?);
    } else {
        checks.push(Check::skipped("probe", "disabled"));
    }
    checks.push(if t.geodesic {
        geodesic_check(&model, cfg.alpha, &oracle)?
    } else {
        Check::skipped("geodesic", "disabled")
    });
    Ok(VerifyReport { scheme: model.name(), checks })
}
