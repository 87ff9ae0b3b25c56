//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph loading, corpus generation, training and evaluation.
#[derive(Debug, Error)]
pub enum LescError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("knowledge graph is empty")]
    EmptyGraph,

    #[error("unknown entity: {0}")]
    UnknownEntity(String),

    #[error("unknown relation: {0}")]
    UnknownRelation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("could not find an absent corruption after {0} attempts")]
    CorruptionExhausted(usize),

    #[error("random walk failed: {0}")]
    WalkFailed(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("statement has no claims")]
    EmptyStatement,

    #[error("claim labels required but missing for statement {0}")]
    MissingClaimLabels(String),

    #[error("non-finite loss encountered: {0}")]
    NonFiniteLoss(String),

    #[error("non-finite gradient for parameter {param}")]
    NonFiniteGradient { param: String },

    #[error("training diverged: loss {loss}")]
    Diverged { loss: f64 },

    #[error("validation set contains a single class")]
    SingleClassValidation,

    #[error("evaluation split is empty")]
    EmptySplit,

    #[error("corpus too small to split: {0} statements")]
    CorpusTooSmall(usize),

    #[error("vocabulary hash mismatch: expected {expected}, got {got}")]
    VocabMismatch { expected: String, got: String },

    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LescError>;
