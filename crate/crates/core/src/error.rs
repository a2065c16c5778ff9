use thiserror::Error;

pub type Result<T, E = GeoAvgError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GeoAvgError {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported covariate law: {0}")]
    UnsupportedLaw(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("iterate became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("iterate trace is empty")]
    EmptyTrace,

    #[error("index {index} out of range for trace with last index {last}")]
    IndexOutOfRange { index: usize, last: usize },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("trace too short for geometric stopping: need at least {required} iterates, have {available}")]
    Truncation { required: usize, available: usize },

    #[error("matrix is singular and no regularization was given")]
    Singular,

    #[error("bound not applicable: {0}")]
    BoundInapplicable(String),

    #[error("invalid noise covariance: {0}")]
    InvalidNoise(String),

    #[error("no convergence after {steps} steps: residual {residual:e} exceeds tolerance {tol:e}")]
    Convergence {
        steps: usize,
        residual: f64,
        tol: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeoAvgError {
    /// Process exit status for this error: 3 for numerical divergence, 2 for
    /// everything that is a usage, input or configuration problem.
    pub fn exit_code(&self) -> i32 {
        match self {
            GeoAvgError::Divergence { .. } => 3,
            GeoAvgError::Convergence { .. } => 1,
            _ => 2,
        }
    }
}
