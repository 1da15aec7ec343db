//! Analysis configuration: a flat `key = value` file with command-line
//! overrides applied on top.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use influence_core::models::{CovarianceStructure, Family, ModelKind};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    CaseWeight,
    LsVariance,
    LsResponse,
    RegVariance,
    ExplanatoryFull,
    ExplanatoryDiag,
    Loglinear,
    LmmCov,
    LmmClusterShift,
    LmmMeanShift,
}

impl Scheme {
    pub const ALL: [Scheme; 10] = [
        Scheme::CaseWeight,
        Scheme::LsVariance,
        Scheme::LsResponse,
        Scheme::RegVariance,
        Scheme::ExplanatoryFull,
        Scheme::ExplanatoryDiag,
        Scheme::Loglinear,
        Scheme::LmmCov,
        Scheme::LmmClusterShift,
        Scheme::LmmMeanShift,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Scheme::CaseWeight => "case_weight",
            Scheme::LsVariance => "ls_variance",
            Scheme::LsResponse => "ls_response",
            Scheme::RegVariance => "reg_variance",
            Scheme::ExplanatoryFull => "explanatory_full",
            Scheme::ExplanatoryDiag => "explanatory_diag",
            Scheme::Loglinear => "loglinear",
            Scheme::LmmCov => "lmm_cov",
            Scheme::LmmClusterShift => "lmm_cluster_shift",
            Scheme::LmmMeanShift => "lmm_mean_shift",
        }
    }

    /// Model kinds the scheme is defined for.
    pub fn models(&self) -> &'static [ModelKind] {
        use ModelKind::*;
        match self {
            Scheme::CaseWeight => &[IidParametric, LocationScale, LinearRegression],
            Scheme::LsVariance | Scheme::LsResponse | Scheme::RegVariance => &[LocationScale, LinearRegression],
            Scheme::ExplanatoryFull | Scheme::ExplanatoryDiag => &[LinearRegression],
            Scheme::Loglinear => &[IidParametric, LocationScale],
            Scheme::LmmCov | Scheme::LmmClusterShift | Scheme::LmmMeanShift => &[LinearMixed],
        }
    }

    /// One index per cluster rather than per observation.
    pub fn per_cluster(&self) -> bool {
        matches!(self, Scheme::LmmCov | Scheme::LmmClusterShift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    LdFull,
    LdBeta,
    LdXi,
    NegRss,
    LoglikRatio,
}

impl Objective {
    pub const ALL: [Objective; 5] =
        [Objective::LdFull, Objective::LdBeta, Objective::LdXi, Objective::NegRss, Objective::LoglikRatio];

    pub fn tag(&self) -> &'static str {
        match self {
            Objective::LdFull => "ld_full",
            Objective::LdBeta => "ld_beta",
            Objective::LdXi => "ld_xi",
            Objective::NegRss => "neg_rss",
            Objective::LoglikRatio => "loglik_ratio",
        }
    }
}

macro_rules! tagged {
    ($t:ty, $what:literal) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                Self::ALL.into_iter().find(|v| v.tag() == s).ok_or_else(|| {
                    let known: Vec<&str> = Self::ALL.iter().map(|v| v.tag()).collect();
                    format!("unknown {} `{s}` (expected one of {})", $what, known.join(", "))
                })
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }
    };
}

tagged!(Scheme, "scheme");
tagged!(Objective, "objective");

/// Which oracle cross-checks `verify` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleToggles {
    pub metric: bool,
    pub connection: bool,
    pub probe: bool,
    pub geodesic: bool,
}

impl Default for OracleToggles {
    fn default() -> Self {
        Self { metric: true, connection: true, probe: true, geodesic: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub model: ModelKind,
    pub family: Family,
    pub covariance: Option<CovarianceStructure>,
    pub xi: Option<Vec<f64>>,
    pub scheme: Scheme,
    pub objective: Objective,
    pub alpha: f64,
    pub auto_rescale: bool,
    /// Target `c` in `G = cI` after rescaling.
    pub rescale_c: f64,
    /// Scale vector `s` of the explanatory schemes; all ones when absent.
    pub scale: Option<Vec<f64>>,
    /// Number of Hermite terms in the log-linear basis.
    pub basis_terms: usize,
    /// `k₀` of the regression variance scheme; the plain `ω⁻¹` form when absent.
    pub k0: Option<f64>,
    pub seed: u64,
    pub mc_draws: usize,
    pub oracle: OracleToggles,
    pub out: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::LinearRegression,
            family: Family::Gaussian,
            covariance: None,
            xi: None,
            scheme: Scheme::CaseWeight,
            objective: Objective::LdFull,
            alpha: 0.0,
            auto_rescale: true,
            rescale_c: 1.0,
            scale: None,
            basis_terms: 2,
            k0: None,
            seed: 1,
            mc_draws: 200_000,
            oracle: OracleToggles::default(),
            out: PathBuf::from("influence_out"),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub scheme: Option<Scheme>,
    pub objective: Option<Objective>,
    pub alpha: Option<f64>,
    pub no_rescale: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

fn parse_num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("`{v}` is not a valid number"))
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|s| parse_num(s.trim())).collect()
}

impl AnalysisConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Config { line: line_no, message };
            let (key, value) =
                line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "model" => self.model = ModelKind::from_tag(v).ok_or_else(|| format!("unknown model `{v}`"))?,
            "family" => self.family = Family::from_tag(v).ok_or_else(|| format!("unknown family `{v}`"))?,
            "covariance" => {
                self.covariance = Some(
                    CovarianceStructure::from_tag(v).ok_or_else(|| format!("unknown covariance structure `{v}`"))?,
                )
            }
            "xi" => self.xi = Some(parse_list(v)?),
            "scheme" => self.scheme = v.parse()?,
            "objective" => self.objective = v.parse()?,
            "alpha" => self.alpha = parse_num(v)?,
            "auto_rescale" => self.auto_rescale = parse_bool(v)?,
            "rescale_c" => self.rescale_c = parse_num(v)?,
            "scale" => self.scale = Some(parse_list(v)?),
            "basis_terms" => self.basis_terms = parse_num(v)?,
            "k0" => self.k0 = Some(parse_num(v)?),
            "seed" => self.seed = parse_num(v)?,
            "mc_draws" => self.mc_draws = parse_num(v)?,
            "oracle_metric" => self.oracle.metric = parse_bool(v)?,
            "oracle_connection" => self.oracle.connection = parse_bool(v)?,
            "oracle_probe" => self.oracle.probe = parse_bool(v)?,
            "oracle_geodesic" => self.oracle.geodesic = parse_bool(v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(ob) = o.objective {
            self.objective = ob;
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        if o.no_rescale {
            self.auto_rescale = false;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
    }

    /// The covariance structure actually used for mixed models.
    pub fn structure(&self) -> Option<CovarianceStructure> {
        (self.model == ModelKind::LinearMixed).then(|| self.covariance.unwrap_or(CovarianceStructure::CompoundSymmetry))
    }

    /// Checks the scheme, objective, model and family against the
    /// compatibility table. Runs before any data is touched.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if !self.scheme.models().contains(&self.model) {
            return bad(format!("scheme {} is not defined for model {}", self.scheme, self.model.tag()));
        }
        match (self.model, self.family) {
            (ModelKind::LinearMixed, f) if f != Family::Gaussian => {
                return bad(format!("linear_mixed needs family gaussian, got {}", f.tag()))
            }
            (ModelKind::LinearRegression | ModelKind::LocationScale, Family::Exponential) => {
                return bad(format!("{} needs a location-scale family", self.model.tag()))
            }
            _ => {}
        }
        if self.family == Family::Exponential && self.scheme != Scheme::CaseWeight {
            return bad(format!("family exponential supports only case_weight, got {}", self.scheme));
        }
        let separable =
            matches!(self.model, ModelKind::LocationScale | ModelKind::LinearRegression | ModelKind::LinearMixed)
                && self.family != Family::Exponential;
        let ok = match self.objective {
            Objective::LdFull => self.scheme != Scheme::Loglinear,
            Objective::LdBeta | Objective::LdXi => self.scheme != Scheme::Loglinear && separable,
            Objective::NegRss => self.scheme == Scheme::RegVariance,
            Objective::LoglikRatio => matches!(self.scheme, Scheme::Loglinear | Scheme::CaseWeight),
        };
        if !ok {
            return bad(format!(
                "objective {} is not available for scheme {} under model {}",
                self.objective,
                self.scheme,
                self.model.tag()
            ));
        }
        if self.covariance.is_some() && self.model != ModelKind::LinearMixed {
            return bad("covariance is only used by linear_mixed".into());
        }
        if let (Some(xi), Some(s)) = (&self.xi, self.structure()) {
            if xi.len() != s.n_params() {
                return bad(format!("{} takes {} values of xi, got {}", s.tag(), s.n_params(), xi.len()));
            }
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(self.rescale_c > 0.0 && self.rescale_c.is_finite()) {
            return bad(format!("rescale_c must be positive, got {}", self.rescale_c));
        }
        if self.basis_terms == 0 {
            return bad("basis_terms must be at least 1".into());
        }
        if let Some(k0) = self.k0 {
            if !(k0 > 0.0 && k0.is_finite()) {
                return bad(format!("k0 must be positive, got {k0}"));
            }
        }
        if self.mc_draws < 2 {
            return bad("mc_draws must be at least 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let cfg = AnalysisConfig::parse(
            "# mixed model\nmodel = linear_mixed\ncovariance = compound_symmetry\nxi = 1.0, 0.3\n\nscheme = lmm_cov # per cluster\nalpha = -1\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelKind::LinearMixed);
        assert_eq!(cfg.xi, Some(vec![1.0, 0.3]));
        assert_eq!(cfg.scheme, Scheme::LmmCov);
        assert_eq!(cfg.alpha, -1.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_name_the_line() {
        let err = AnalysisConfig::parse("model = linear_regression\nscheme = nope\n").unwrap_err();
        assert!(matches!(err, CliError::Config { line: 2, .. }));
        let err = AnalysisConfig::parse("alpha = 1\nalpha = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        assert!(AnalysisConfig::parse("colour = red").is_err());
    }

    #[test]
    fn flags_win() {
        let mut cfg = AnalysisConfig::parse("scheme = case_weight\nauto_rescale = true\nseed = 4").unwrap();
        cfg.apply(&Overrides { scheme: Some(Scheme::RegVariance), no_rescale: true, ..Default::default() });
        assert_eq!(cfg.scheme, Scheme::RegVariance);
        assert!(!cfg.auto_rescale);
        assert_eq!(cfg.seed, 4);
    }

    #[test]
    fn compatibility_table() {
        let mut cfg = AnalysisConfig { scheme: Scheme::LmmCov, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.model = ModelKind::LinearMixed;
        cfg.validate().unwrap();
        cfg.objective = Objective::NegRss;
        assert!(cfg.validate().is_err());
        let rss = AnalysisConfig { scheme: Scheme::RegVariance, objective: Objective::NegRss, ..Default::default() };
        rss.validate().unwrap();
        let ll = AnalysisConfig {
            model: ModelKind::IidParametric,
            scheme: Scheme::Loglinear,
            objective: Objective::LdFull,
            ..Default::default()
        };
        assert!(ll.validate().is_err());
        let exp = AnalysisConfig { model: ModelKind::IidParametric, family: Family::Exponential, ..Default::default() };
        exp.validate().unwrap();
        assert!(AnalysisConfig { objective: Objective::LdBeta, ..exp }.validate().is_err());
    }
}
