use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, JawsError>;

#[derive(Debug, Error)]
pub enum JawsError {
    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid initial-condition spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("solver blow-up at step {step}")]
    BlowUp { step: usize },

    #[error("data generation failed for trajectory {index} (seed {seed}) after {attempts} attempts")]
    DataGeneration { index: usize, seed: u64, attempts: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("container format error: {0}")]
    Format(String),

    #[error("bad magic bytes: expected JAWS1")]
    BadMagic,

    #[error("checkpoint/architecture mismatch: {0}")]
    ArchMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
