use thiserror::Error;

/// Errors produced by estimators, the training harness and trace I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("all sample points are identical; median-heuristic bandwidth is undefined")]
    AllPointsIdentical,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("normalized HSIC {0} lies outside [0, 1] beyond rounding tolerance")]
    RangeViolation(f64),

    #[error("instance too large for the brute-force oracle: n = {n} exceeds {limit}")]
    InstanceTooLarge { n: usize, limit: usize },

    #[error("linear system is numerically singular (condition estimate {0:.3e})")]
    SingularSystem(f64),

    #[error("horizon out of range: prediction horizon {horizon} does not fit inside sequences of length {sequence_len}")]
    HorizonOutOfRange { horizon: usize, sequence_len: usize },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("non-monotonic epoch: expected {expected}, got {got}")]
    NonMonotonicEpoch { expected: u32, got: u32 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("trace is empty: {0}")]
    EmptyTrace(String),

    #[error("series `{series}` missing from trace `{trace}`")]
    MissingSeries { series: String, trace: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
