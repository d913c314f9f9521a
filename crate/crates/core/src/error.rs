use alloc::string::String;

use thiserror::Error;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("degenerate label set: need at least 2 classes, found {0}")]
    DegenerateLabelSet(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("unachievable skew: {0}")]
    UnachievableSkew(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("model is not trained")]
    Untrained,
    #[error("model kind {0} is not gradient-trainable")]
    NotDifferentiable(&'static str),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("budget exhausted at step {step}: epsilon {epsilon} exceeds cap {cap}")]
    BudgetExhausted { step: u64, epsilon: f64, cap: f64 },
    #[error("all Renyi orders overflowed")]
    AllOrdersOverflowed,
    #[error("ledger contains noise-free or unclipped steps; no finite guarantee")]
    Unaccounted,
    #[error("unbalanced evaluation: {members} members vs {non_members} non-members")]
    UnbalancedEvaluation { members: usize, non_members: usize },
    #[error("class {0} is absent from the evaluation set")]
    ClassAbsent(usize),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
