use thiserror::Error;

/// Errors produced by the estimation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("record {sample_id:?} has no group_id")]
    MissingGroupId { sample_id: String },

    #[error("no outer group mapping for id {0:?}")]
    UnknownSampleId(String),

    #[error("invalid lambda {0}: must be finite and non-negative")]
    InvalidLambda(f64),

    #[error("invalid deviation a = {0}")]
    InvalidA(f64),

    #[error("invalid budget s = {0}: must be finite and positive")]
    InvalidS(f64),

    #[error("invalid tolerance {0}: must be finite and positive")]
    InvalidTolerance(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid model metadata: {0}")]
    InvalidMeta(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("internal consistency violation: {0}")]
    Internal(String),

    #[error("loss variance is zero; quadratic rate approximation is undefined")]
    ZeroVariance,

    #[error("records carry no grad_theta vectors")]
    MissingGradients,

    #[error("records carry no grad_norm_sq values")]
    MissingGradNorms,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("probability {prob} times denominator {denominator} is not an integer")]
    NonRationalProbs { prob: f64, denominator: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
