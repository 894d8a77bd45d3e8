use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    /// Input data violates a structural requirement. `field` names the
    /// offending record so CLI users can locate it.
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error at pair ({recruiter}, {event}): {message}")]
    Domain {
        recruiter: usize,
        event: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Curve(String),

    #[error("non-finite objective at the starting point {0:?}; try a different start")]
    NonFiniteStart(Vec<f64>),

    #[error("matrix is not compatible with the study")]
    Incompatible,

    #[error("incremental cache diverged from recomputation (max relative error {0:e})")]
    CacheMismatch(f64),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data rather than a runtime failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::Validation { .. }
                | Error::Parse { .. }
                | Error::InvalidParameter(_)
                | Error::Incompatible
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
