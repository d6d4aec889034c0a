use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto exit codes:
/// configuration and contract problems exit 2, numeric failures exit 3,
/// IO failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration field failed validation. `path` is the
    /// dotted field path (e.g. `envelope.alpha`).
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// An operation precondition was violated by the caller.
    #[error("contract violation in {operation}: {message}")]
    Contract { operation: String, message: String },

    /// A requested problem size exceeds the configured hard cap.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A numeric routine failed to converge or broke down.
    #[error("numeric failure in {operation}: {message}")]
    Numeric { operation: String, message: String },

    /// An empirically checked bound was violated; carries the witness.
    #[error("property failure: {0}")]
    PropertyFailure(String),

    /// Too few admissible data points for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }

    pub fn contract(operation: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Contract { operation: operation.into(), message: message.into() }
    }

    pub fn numeric(operation: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric { operation: operation.into(), message: message.into() }
    }

    /// Process exit code for the CLI: 2 config/contract, 3 numeric, 4 IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Contract { .. } | Error::Resource(_) => 2,
            Error::Numeric { .. } | Error::PropertyFailure(_) | Error::InsufficientData(_) => 3,
            Error::Io(_) | Error::Serde(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
