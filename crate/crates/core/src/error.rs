use thiserror::Error;

/// Errors produced by averagers, baselines, the oracle, and problem generators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("evaluation period must be at least 1")]
    ZeroEvalPeriod,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in weight vector at index {index}")]
    NonFiniteWeight { index: usize },

    #[error("non-finite loss value: {context}")]
    NonFiniteLoss { context: &'static str },

    #[error("average is empty (no iterates absorbed)")]
    EmptyAverage,

    #[error("evaluation at step {step} is misordered: {reason}")]
    MisorderedEvaluation { step: u64, reason: &'static str },

    #[error("iterate log holds {len} iterates, but step {requested} was requested")]
    LogTooShort { len: usize, requested: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("problem generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
