use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("stale forward cache: tape was recorded for parameter version {tape}, network is at {current}")]
    StaleTape { tape: u64, current: u64 },

    #[error("shape mismatch between parameters and gradients at layer {layer}")]
    ShapeMismatch { layer: usize },

    #[error("invalid network layout: {0}")]
    InvalidNetwork(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid scene suite: {0}")]
    InvalidSuite(String),

    #[error("placement failed after {attempts} attempts in scene {scene_id}")]
    PlacementFailed { scene_id: i64, attempts: usize },

    #[error("degenerate geometry: object centers coincide")]
    DegenerateGeometry,

    #[error("empty spatial relation")]
    EmptyRelation,

    #[error("invalid spatial relation: {0}")]
    InvalidRelation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("judge: {0}")]
    Judge(String),

    #[error("external judge timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("external judge sent a malformed response: {0}")]
    MalformedResponse(String),

    #[error("external judge response id {got} does not match request id {expected}")]
    IdMismatch { expected: u64, got: u64 },

    #[error("bonus already injected for this episode")]
    BonusAlreadyInjected,

    #[error("dataset digest mismatch for {path}: expected {expected}, found {found}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("record {id} is inconsistent: {reason}")]
    InconsistentRecord { id: u64, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
