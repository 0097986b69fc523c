//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("duplicate qubit indices in gate targets: {0:?}")]
    DuplicateTargets(Vec<usize>),

    #[error("gate {gate} expects {expected} target(s), got {got}")]
    TargetArity {
        gate: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("sampled mode requires shots >= 1")]
    ZeroShots,

    #[error("feature vector has length {got}, model expects {expected}")]
    FeatureDimension { expected: usize, got: usize },

    #[error("parameter vector has length {got}, model expects {expected}")]
    ParamDimension { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("gradient oracle requires exact expectation mode")]
    OracleNeedsExact,

    #[error("no valid client selected: {reason}")]
    ClientSelection { reason: String },

    #[error("parameter vectors have mismatched lengths")]
    ShapeMismatch,

    #[error("dataset of {n_samples} samples cannot be split across {k} clients")]
    DatasetTooSmall { n_samples: usize, k: usize },

    #[error("partition retry bound exceeded after {retries} attempts (empty shard)")]
    PartitionRetriesExceeded { retries: usize },

    #[error("selection history is empty (no rounds recorded)")]
    EmptyHistory,

    #[error("entropy fairness score needs at least 2 clients, got {0}")]
    TooFewClients(usize),

    #[error("reference accuracy must be positive, got {0}")]
    NonPositiveReference(f64),

    #[error("accuracy {setting} exceeds reference maximum {max}")]
    AccuracyAboveReference { setting: f64, max: f64 },

    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfUnitInterval { name: &'static str, value: f64 },

    #[error("decay fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to read {path}: {source}")]
    DataRead {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}:{line}: {reason}")]
    DataFormat {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
