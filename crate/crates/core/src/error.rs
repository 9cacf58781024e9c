use std::path::PathBuf;

use thiserror::Error;

use crate::matrices::ViolationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the library.
///
/// Variants are grouped by the broad category returned from [`Error::category`],
/// which the command-line driver maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix failed validation with {} violation(s); first: {}", .0.len(), .0[0])]
    Validation(Vec<ViolationReport>),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {j} is unreachable from node {i}")]
    Unreachable { i: usize, j: usize },

    #[error("graph is disconnected: node {j} cannot be reached from node {i}")]
    Disconnected { i: usize, j: usize },

    #[error("enumeration over {dim} nodes exceeds the limit of {limit}")]
    SizeGuard { dim: usize, limit: usize },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("constraint system needs {rows} rows, above the cap of {cap}")]
    Capacity { rows: usize, cap: usize },

    #[error("no strictly feasible starting point: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("score undefined: {0}")]
    UndefinedScore(String),

    #[error("{}:{line}:{column}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Parse,
    Validation,
    Connectivity,
    Capacity,
    Divergence,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parse { .. } => ErrorCategory::Parse,
            Error::Io { .. } => ErrorCategory::Io,
            Error::Unreachable { .. } | Error::Disconnected { .. } => ErrorCategory::Connectivity,
            Error::Capacity { .. } | Error::SizeGuard { .. } => ErrorCategory::Capacity,
            Error::Divergence { .. } | Error::Solver(_) | Error::Infeasible(_) => {
                ErrorCategory::Divergence
            }
            Error::Dimension(_)
            | Error::Argument(_)
            | Error::Validation(_)
            | Error::InvalidGraph(_)
            | Error::Configuration(_)
            | Error::Normalization(_)
            | Error::UndefinedScore(_) => ErrorCategory::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
