use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error in `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("instance is not solvable: {0}")]
    Infeasible(String),

    #[error("time index {t} out of range {lo}..={hi}")]
    IndexOutOfRange { t: usize, lo: usize, hi: usize },

    #[error("no trials with horizon {0}")]
    EmptyGroup(usize),

    #[error("solver did not reach an optimum: {0}")]
    Solver(String),

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
