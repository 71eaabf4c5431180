use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_INGEST: i32 = 3;
pub const EXIT_CAPACITY: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: row {row}: {reason}")]
    Ingest {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("{0}")]
    Core(#[from] ade_core::Error),

    #[error("{count} estimate(s) outside the (1 +- eps) band")]
    Verify { count: usize },

    #[error("representativeness audit failed: min count {min} of {l} is below 0.9 l")]
    AuditFailed { min: usize, l: usize },

    #[error("invalid argument: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Ingest { .. } => EXIT_INGEST,
            CliError::Core(ade_core::Error::Capacity { .. }) => EXIT_CAPACITY,
            CliError::Core(ade_core::Error::NonFinite { .. } | ade_core::Error::EmptyDataset) => {
                EXIT_INGEST
            }
            CliError::Verify { .. } | CliError::AuditFailed { .. } => EXIT_VERIFY,
            _ => EXIT_FAILURE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
