use std::path::PathBuf;

use crate::autodiff::OpKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: OpKind,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape is empty")]
    EmptyTape,

    #[error("tape was built with recording disabled")]
    NotRecording,

    #[error("non-finite function value {value} when perturbing {param}[{index}] by {delta:+e}")]
    NonFiniteProbe {
        param: String,
        index: usize,
        delta: f64,
        value: f64,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("non-binary value {value} at index {index}")]
    NonBinary { index: usize, value: f64 },

    #[error("degenerate moments: {0}")]
    DegenerateMoments(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at step {step}: disc={loss_disc}, gen={loss_gen}")]
    NonFiniteLoss {
        step: u64,
        loss_disc: f64,
        loss_gen: f64,
    },

    #[error("degenerate proposal: {0}")]
    DegenerateProposal(String),

    #[error("not enough samples: {0}")]
    NotEnoughSamples(String),

    #[error("idx format error at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error("bad checkpoint at byte {offset}: {message}")]
    Checkpoint { offset: usize, message: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("experiment {experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
