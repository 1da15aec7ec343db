use thiserror::Error;

pub type Result<T> = std::result::Result<T, InfluenceError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfluenceError {
    #[error("point lies outside the perturbation domain (coordinate {coordinate}, value {value})")]
    DomainViolation { coordinate: usize, value: f64 },
    #[error("no closed-form geometry and no sampler for scheme `{0}`")]
    GeometryUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curve needs at least two points on a strictly increasing grid")]
    DegenerateCurve,
    #[error("metric is singular: {0}")]
    SingularMetric(String),
    #[error("direction has zero length under the metric")]
    DegenerateDirection,
    #[error("covariant Hessian is identically zero; standardized measure undefined")]
    ZeroHessian,
    #[error("design matrix is rank deficient")]
    RankDeficientDesign,
    #[error("optimizer did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
    #[error("scale vector gives a zero perturbation direction (Σ s_k β_k = 0)")]
    ZeroDirection,
    #[error("basis functions are not orthogonal under the base density: {0}")]
    OrthogonalityViolation(String),
    #[error("normalizing constant diverges: {0}")]
    NormalizerDivergence(String),
    #[error("negative Hessian of the log-likelihood is singular")]
    SingularHessian,
    #[error("scheme `{0}` has no sampler")]
    NoSampler(String),
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("diffeomorphism is not strictly monotone: {0}")]
    NonMonotoneDiffeo(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("incompatible configuration: {0}")]
    Incompatible(String),
}

impl InfluenceError {
    /// True for failures of the numerics (singular metrics, divergence,
    /// non-convergence) as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            InfluenceError::SingularMetric(_)
                | InfluenceError::SingularHessian
                | InfluenceError::NonConvergence { .. }
                | InfluenceError::NormalizerDivergence(_)
                | InfluenceError::NonFiniteValue(_)
                | InfluenceError::ZeroHessian
                | InfluenceError::DegenerateDirection
                | InfluenceError::RankDeficientDesign
        )
    }
}
