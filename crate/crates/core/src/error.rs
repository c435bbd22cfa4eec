use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("matrix is not positive semi-definite: {0}")]
    PsdViolation(String),

    #[error("no value lies above the rank cutoff {cutoff:e}")]
    RankZero { cutoff: f64 },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("format error{}: {message}", .row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Format { row: Option<usize>, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("outside the domain of the formula: {0}")]
    Domain(String),

    #[error("invalid network spec: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(row: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            row,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
