//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("division by zero rational function")]
    DivisionByZero,
    #[error("denominator vanishes at m = {m}: {context}")]
    PoleAt { m: u64, context: String },
    #[error("subset size {nu} out of range for a set of {len} indices")]
    SubsetSizeOutOfRange { nu: usize, len: usize },
    #[error("order {0} outside the supported range 1..=8")]
    OrderOutOfRange(usize),
    #[error("slot budget exceeded: {slots} slots, at most 8 supported")]
    TooManySlots { slots: usize },
    #[error("slot index {slot} exceeds dimension {dim}")]
    SlotOutOfRange { slot: usize, dim: usize },
    #[error("inconsistent conditions: {0}")]
    InconsistentConditions(String),
    #[error("estimator {name} requires at least {min_m} samples, got {m}")]
    TooFewSamples { name: String, min_m: u64, m: u64 },
    #[error("binding mismatch: {0}")]
    BindingMismatch(String),
    #[error("no estimator in the registry matches the given conditions ({0}); use `derive` to construct one")]
    UnsupportedEstimator(String),
    #[error("unknown estimator name {0:?}; see `list` for the registry")]
    UnknownEstimator(String),
    #[error("missing cumulant value for {0}")]
    MissingCumulant(String),
    #[error("batches have mixed sample counts: {0} vs {1}")]
    MixedBatchSizes(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid sample data: {0}")]
    InvalidData(String),
    #[error("malformed estimator document: {0}")]
    MalformedDocument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
