use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input or configuration rejected before any numerics ran.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("linear solver did not converge: residual {residual:e} > {tolerance:e} after {iterations} iterations")]
    NonConvergence {
        residual: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("snapshot series covers [{start}, {end}] but [{from}, {to}] was requested")]
    Coverage {
        start: f64,
        end: f64,
        from: f64,
        to: f64,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse(_) | Error::Io { .. } => 2,
            Error::NonConvergence { .. } | Error::Coverage { .. } | Error::Numeric(_) => 3,
        }
    }
}
