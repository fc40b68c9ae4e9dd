//! Experiment runner behind the `qfilter` binary: JSON configs in,
//! CSV tables and a JSON report out, plus the named verification suites.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod runners;
pub mod stats;
pub mod suites;
pub mod table;

pub use app::{run_config, run_file, verify, ExitStatus, RunOutput};
pub use config::{ExperimentConfig, ExperimentKind};
pub use table::ResultTable;

/// Failure classes of the command line, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Unreadable or invalid input; nothing has been written.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// The simulation itself failed (blow-up, no convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl AppError {
    pub fn invalid(e: qfilter::Error) -> Self {
        Self::Invalid(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl From<qfilter::Error> for AppError {
    fn from(e: qfilter::Error) -> Self {
        use qfilter::Error::*;
        match e {
            IntegrationBlowup { .. } | NonConvergence { .. } | DegenerateFitWindow { .. } => {
                Self::Numerical(e.to_string())
            }
            other => Self::Invalid(other.to_string()),
        }
    }
}

pub type AppResult<T> = std::result::Result<T, AppError>;
