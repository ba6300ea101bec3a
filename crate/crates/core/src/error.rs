use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by dataset handling, graph construction and training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("node id {id} out of range for {n} nodes ({context})")]
    Bounds {
        id: usize,
        n: usize,
        context: String,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("class {class} has {available} labeled nodes, {requested} requested")]
    InsufficientLabels {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("node {node} has a zero feature vector; cosine similarity is undefined")]
    DegenerateFeature { node: usize },

    #[error("frequency matrix is empty (no co-occurrences)")]
    EmptyFrequency,

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("malformed cache file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
