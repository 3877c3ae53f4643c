use thiserror::Error;

/// Errors raised by the decomposition pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnovaError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("feature {feature} has category {value} but its cardinality is {cardinality}")]
    CategoryOutOfRange {
        feature: usize,
        value: u32,
        cardinality: u32,
    },

    #[error("row {row} has {found} features, expected {expected}")]
    RowWidth {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("support rows must be pairwise distinct (row {0} repeats an earlier row)")]
    DuplicateSupportRow(usize),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("index space size overflows 128-bit integers")]
    Overflow,

    #[error("invalid index key {key}: {reason}")]
    InvalidKey { key: String, reason: String },

    #[error("duplicate key {0} in system")]
    DuplicateKey(String),

    #[error("feature {feature} out of range for {dims} features")]
    FeatureOutOfRange { feature: usize, dims: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("query row {0:?} is not in the support")]
    OutOfSupport(Vec<u32>),

    #[error("linear solve failed: relative residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveFailed { residual: f64, tolerance: f64 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("oracle precondition violated: {0}")]
    OraclePrecondition(String),
}

pub type Result<T, E = AnovaError> = std::result::Result<T, E>;
