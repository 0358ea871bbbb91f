use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unplaceable: could not place {class} after {attempts} attempts")]
    Unplaceable { class: String, attempts: usize },

    #[error("unreachable target: no reachable state sees {class} in floorplan {floorplan}")]
    Unreachable { class: String, floorplan: String },

    #[error("target {class} is not present in floorplan {floorplan}")]
    TargetAbsent { class: String, floorplan: String },

    #[error("missing embedding: {0}")]
    MissingEmbedding(String),

    #[error("embedding for {class} has dimension {got}, expected {expected}")]
    EmbeddingDim {
        class: String,
        expected: usize,
        got: usize,
    },

    #[error("zero vector for {0}")]
    ZeroVector(String),

    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,

    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("stale cache: backward called with parameters that differ from the forward pass")]
    StaleCache,

    #[error("unknown target row: {0}")]
    UnknownTarget(String),

    #[error("unknown object class: {0}")]
    UnknownClass(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite gradient rejected")]
    NonFiniteGradient,

    #[error("not enough {split} floorplans for {room}: need {need}, have {have}")]
    InsufficientFloorplans {
        room: String,
        split: &'static str,
        need: usize,
        have: usize,
    },

    #[error("parse error in {source_name} line {line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },

    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
