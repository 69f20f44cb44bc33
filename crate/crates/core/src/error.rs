use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by configuration, scenario ingestion and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or domain invariant does not hold.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// A series has the wrong number of samples.
    #[error("length mismatch in `{series}`: expected {expected}, found {found}")]
    LengthMismatch {
        series: String,
        expected: usize,
        found: usize,
    },

    /// Two sessions occupy the same plug at the same time.
    #[error("sessions {first} and {second} overlap on column {column}, plug {plug}")]
    PlugConflict {
        first: u32,
        second: u32,
        column: usize,
        plug: usize,
    },

    /// More concurrent sessions than the station has plugs.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An input file has a malformed schema or value.
    #[error("{path}: {reason}")]
    Schema { path: PathBuf, reason: String },

    /// A solver produced a non-finite value.
    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (as opposed to I/O or solver faults).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. }
                | Error::LengthMismatch { .. }
                | Error::PlugConflict { .. }
                | Error::Infeasible(_)
                | Error::Schema { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
