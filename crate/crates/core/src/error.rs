use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain set: {0}")]
    InvalidChains(String),

    #[error("ragged chains: chain {chain} has {found} draws, expected {expected}")]
    RaggedChains {
        chain: i64,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("class {0} has no training rows")]
    MissingClass(usize),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("within-chain covariance is singular; subset parameters (K = {k}, draws per chain = {l})")]
    SingularCovariance { k: usize, l: usize },

    #[error("transition matrix: {0}")]
    InvalidTransitionMatrix(String),

    #[error("unknown preset {name:?}; available: {available}")]
    UnknownPreset { name: String, available: String },
}
