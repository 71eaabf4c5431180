use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("requested {requested} bytes exceeds the memory cap of {cap} bytes")]
    Capacity { requested: u64, cap: u64 },

    #[error("calibration needs at least {min} samples, got {n_samples}")]
    CalibrationTooSmall { n_samples: usize, min: usize },

    #[error("no Med_p calibration available for p = {p}")]
    MissingCalibration { p: f64 },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("not a structure file (bad magic bytes)")]
    BadMagic,

    #[error("structure format version {found} is not supported (expected version {expected})")]
    Version { found: u16, expected: u16 },

    #[error("checksum mismatch: file is truncated or corrupted")]
    Checksum,

    #[error("corrupt structure file: {0}")]
    Corrupt(String),

    #[error("malformed Med_p table line {line}: {reason}")]
    TableParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}
