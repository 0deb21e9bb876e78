use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty reduction")]
    EmptyReduction,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no visible context for query row {row}")]
    NoVisibleContext { row: usize },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("encoder state belongs to encoder {state_owner}, not {encoder}")]
    StateMismatch { state_owner: u64, encoder: u64 },

    #[error("invalid token id {token} (output dim {dim})")]
    InvalidToken { token: usize, dim: usize },

    #[error("infeasible restriction: every alignment path is blocked")]
    InfeasibleRestriction,

    #[error("lambda must satisfy 0 < lambda < 1, got {0}")]
    LambdaOutOfRange(f64),

    #[error("fast-emit lambda must be non-negative, got {0}")]
    NegativeFastEmit(f64),

    #[error("hypothesis handle belongs to search space {handle_space}, expected {space}")]
    CrossSpaceHandle { handle_space: u64, space: u64 },

    #[error("empty beam")]
    EmptyBeam,

    #[error("utterance sets differ: {0}")]
    MismatchedSets(String),

    #[error("audio duration must be positive")]
    ZeroAudio,

    #[error("feature file {path}: {reason} at byte offset {offset}")]
    FeatureFormat {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("fixture: {0}")]
    Fixture(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
