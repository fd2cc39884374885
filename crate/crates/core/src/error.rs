use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} {index} out of range (limit {limit})")]
    Range {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The zero coefficient vector (or any recovery point) fails a row.
    #[error("infeasible scenario: row {row} ({label}) violated by {violation:.3e}")]
    InfeasibleScenario {
        row: usize,
        label: String,
        violation: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("solver failed at slot {slot}: {source}")]
    Solver {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether this error comes from user input rather than a run failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::Io { .. } | Error::Parameter(_)
        )
    }
}
