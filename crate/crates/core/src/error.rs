use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the filtering, data and experiment layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("observation noise covariance R must be diagonal with positive entries ({0})")]
    NonDiagonalR(String),
    #[error("{0} is not a symmetric positive semi-definite matrix")]
    NonPsdCovariance(&'static str),
    #[error("innovation covariance is singular or ill-conditioned (condition number {0:e})")]
    SingularInnovation(f64),
    #[error("EM second moment of observation {index} is negative ({value:e})")]
    NegativeSecondMoment { index: usize, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("time column is not strictly increasing at row {row}")]
    NonMonotonicTime { row: usize },
    #[error("dataset contains no usable rows")]
    EmptyDataset,
    #[error("timestamp {time} lies outside the ground-truth coverage [{start}, {end}]")]
    OutOfRange { time: f64, start: f64, end: f64 },
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
