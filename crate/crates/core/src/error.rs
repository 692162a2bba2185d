use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The data cannot identify a model (e.g. all observations identical).
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("duplicate observation for date {0}")]
    DuplicateDate(NaiveDate),
    #[error("schema mismatch: expected `{expected}`, found `{found}`")]
    Schema { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Copy of the error; I/O and parser errors keep only their message.
    pub(crate) fn duplicate(&self) -> Self {
        match self {
            Error::Argument(m) => Error::Argument(m.clone()),
            Error::Domain(m) => Error::Domain(m.clone()),
            Error::Degenerate(m) => Error::Degenerate(m.clone()),
            Error::Parse { path, line, message } => Error::Parse {
                path: path.clone(),
                line: *line,
                message: message.clone(),
            },
            Error::DuplicateDate(d) => Error::DuplicateDate(*d),
            Error::Schema { expected, found } => Error::Schema {
                expected: expected.clone(),
                found: found.clone(),
            },
            other => Error::Fit(other.to_string()),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Domain(_) => "domain",
            Error::Degenerate(_) => "degenerate",
            Error::Fit(_) => "fit",
            Error::Parse { .. } => "parse",
            Error::DuplicateDate(_) => "duplicate_date",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
