use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not positive semi-definite: smallest eigenvalue {min_eig:e} below tolerance -{tol:e}")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("matrix is not symmetric: max asymmetry {asym:e}")]
    NotSymmetric { asym: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("insufficient data: need at least {need} samples, got {got}")]
    InsufficientData { need: usize, got: usize },

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, also used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Dimension { .. } => "config",
            Error::NotPsd { .. } | Error::NotSymmetric { .. } | Error::Numerical(_) => "numerical",
            Error::InsufficientData { .. } | Error::Degenerate(_) => "data",
            Error::Solver(_) => "solver",
            Error::Format { .. } | Error::Consistency(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "format" => 4,
            "numerical" => 5,
            "data" => 6,
            "solver" => 7,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}
