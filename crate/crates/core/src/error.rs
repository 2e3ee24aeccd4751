use thiserror::Error;

/// Errors produced by the pipeline library.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input row. `location` is "file:row" so callers can point
    /// at the offending line.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Referential or schema-level validation failure.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller violated an operation precondition (shape mismatch, empty
    /// sequence, feature-dimension mismatch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite value encountered in a numeric routine.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A required configuration entry is missing or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Training diverged or could not proceed.
    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
