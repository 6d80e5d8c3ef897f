//! Command-line surface for the sampling-rate allocation library:
//! configuration ingestion, solver/oracle/simulator dispatch, experiment
//! presets (`fig4`, `fig5`, `fig6`), and CSV/JSON/SVG persistence.

pub mod cli;
pub mod config;
pub mod figures;
pub mod plot;
pub mod report;

use thiserror::Error;

/// CLI-level failures, mapped to process exit codes: validation errors
/// exit 1, solver non-convergence exits 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::NonConvergence(_) => 2,
        }
    }
}

impl From<taskalloc::Error> for CliError {
    fn from(e: taskalloc::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("i/o error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
