use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid axis {axis} for tensor of rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward already ran on this tape")]
    DoubleBackward,

    #[error("target rows must lie on the probability simplex: row {row} {reason}")]
    NotOnSimplex { row: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: {what}")]
    Diverged { step: usize, what: String },

    #[error("bound precondition violated: {0}")]
    Vacuous(String),

    #[error("run for seed {seed} failed: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short category string used for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. }
            | Error::InvalidAxis { .. }
            | Error::NonFinite { .. }
            | Error::NonScalarRoot(_)
            | Error::DoubleBackward
            | Error::NotOnSimplex { .. } => "numeric",
            Error::Config(_) => "config",
            Error::TokenOutOfRange { .. } | Error::Parse { .. } | Error::Data(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
            Error::Diverged { .. } | Error::Seed { .. } => "training",
            Error::Vacuous(_) => "bound",
            Error::Io(_) | Error::Json(_) => "io",
        }
    }
}
