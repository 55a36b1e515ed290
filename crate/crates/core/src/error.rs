use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}, column {column}: {reason}")]
    Cell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("label column {0} not found in header")]
    MissingLabelColumn(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset has a single class; at least two are required")]
    SingleClass,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("feature mask selects no features")]
    EmptyMask,

    #[error("value {0} lies outside [0, 1]")]
    OutOfUnitInterval(f64),

    #[error("unknown label {0}")]
    UnknownLabel(usize),

    #[error("iteration {0} has already been recorded")]
    AlreadyRecorded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
