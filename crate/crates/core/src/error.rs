use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a structural or domain check. `path` names the offending
    /// field (JSON-path style, e.g. `graph.edges[3].w`).
    #[error("invalid {path}: {reason}")]
    Validation { path: String, reason: String },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("degenerate spectrum: {0}")]
    Degenerate(String),

    #[error("infeasible gains: {reason} (minimal admissible {name} = {minimal})")]
    Infeasible {
        reason: String,
        name: &'static str,
        minimal: f64,
    },

    /// The integrator produced a non-finite state. `last_finite_t` is the last
    /// time at which every component was finite.
    #[error("numerical divergence after t = {last_finite_t}")]
    Divergence { last_finite_t: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status used by the command-line front end:
    /// 2 validation, 3 numerical divergence, 4 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Dimension { .. } | Error::Infeasible { .. } => 2,
            Error::Json(_) => 2,
            Error::Divergence { .. } => 3,
            Error::Io { .. } => 4,
            Error::Degenerate(_) | Error::Fit(_) => 1,
        }
    }
}
