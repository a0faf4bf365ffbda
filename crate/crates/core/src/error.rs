use std::path::PathBuf;

/// Errors raised by the modelling and analysis routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A physical argument lies outside its domain (negative length, λ ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or malformed request (grid mismatch, empty range, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// The photonic-molecule resonance denominator vanished.
    #[error("field solution is singular at {wavelength_nm} nm (|denominator| = {magnitude:e})")]
    Singular { wavelength_nm: f64, magnitude: f64 },

    /// Input data that cannot be processed (non-finite entries, all-zero matrix, ...).
    #[error("data error: {0}")]
    Data(String),

    /// The least-squares system is not identifiable.
    #[error("fit error: {message} (condition number {condition:e})")]
    Fit { message: String, condition: f64 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: msg.into(),
        }
    }

    /// Process exit code: 2 for usage/config/input problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. } | Error::Fit { .. } | Error::Data(_) | Error::NotFound(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
