use thiserror::Error;

/// Errors produced by the simulation and reconstruction routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("noise trajectory covers {noise_ns} ns but the sequence lasts {sequence_ns} ns")]
    DurationMismatch { sequence_ns: f64, noise_ns: f64 },

    #[error("matrix deviates from unitarity by {0:e}")]
    NotUnitary(f64),

    #[error("coordinate ({0}, {1}) lies outside the field of view")]
    OutOfExtent(f64, f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
