use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Validation,
    Io,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("node id {id} out of range for a graph with {num_nodes} nodes")]
    NodeOutOfRange { id: usize, num_nodes: usize },

    #[error("feature file has {rows} rows but the graph has {num_nodes} nodes")]
    FeatureRowCount { rows: usize, num_nodes: usize },

    #[error("edge file {0} contains no edges")]
    EmptyEdgeFile(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph too small to split: {0}")]
    GraphTooSmall(String),

    #[error("requested {requested} negative edges but only {available} non-edges are available")]
    InsufficientNonEdges { requested: usize, available: usize },

    #[error("negative sampling gave up after {attempts} rejected draws")]
    RejectionBudgetExceeded { attempts: usize },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("malformed {what}: {msg}")]
    Format { what: String, msg: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Parse { .. } | Error::Format { .. } => ErrorClass::Parse,
            Error::Diverged { .. }
            | Error::NonFinite(_)
            | Error::RejectionBudgetExceeded { .. } => ErrorClass::Runtime,
            _ => ErrorClass::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: impl Into<String>, msg: impl ToString) -> Self {
        Error::Format {
            what: what.into(),
            msg: msg.to_string(),
        }
    }
}
