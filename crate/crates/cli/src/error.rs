use influence_core::InfluenceError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a number")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("row {row}: cluster_id is empty")]
    EmptyCluster { row: usize },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("metric is singular (rank {rank} of {p}); remove redundant perturbation components, e.g. use scheme explanatory_diag")]
    SingularScheme { rank: usize, p: usize },
    #[error("one or more oracle checks failed")]
    VerificationFailed,
    #[error(transparent)]
    Influence(#[from] InfluenceError),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input or configuration, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SingularScheme { .. } | CliError::VerificationFailed => 3,
            CliError::Influence(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
