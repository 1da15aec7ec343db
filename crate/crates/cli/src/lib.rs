//! Command-line front end for local influence analysis: CSV ingestion,
//! configuration, the analysis pipeline, oracle verification and report
//! writers.

pub mod analyze;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;
pub mod plot;
pub mod simulate;
pub mod verify;

pub use config::{AnalysisConfig, Objective, Overrides, Scheme};
pub use error::{CliError, Result};
