use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A coordinate fell outside `[0, 1]`.
    #[error("coordinate {0} outside [0, 1]")]
    Domain(f64),

    #[error("validation failed: {0}")]
    Validation(String),

    /// Dense storage was requested above the configured vertex limit.
    #[error("size {n} exceeds the dense-storage limit of {max}")]
    Size { n: usize, max: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Short machine-readable tag used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::Size { .. } => "size",
            Error::Unsupported(_) => "unsupported",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonConvergence(_) => "non_convergence",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
