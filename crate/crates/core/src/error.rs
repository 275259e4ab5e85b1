use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: cannot parse {value:?}")]
    Parse { row: usize, column: String, value: String },

    #[error("short flight: {len} samples, need at least {needed}")]
    ShortFlight { len: usize, needed: usize },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("timestamp error: {0}")]
    Timestamps(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("no fault data for motor(s) {0:?}")]
    MissingClass(Vec<usize>),

    #[error("label error: {0}")]
    Label(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("model compatibility error: {0}")]
    Compatibility(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Compatibility,
    Internal,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Compatibility => 4,
            ErrorClass::Internal => 5,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Io(_) => ErrorClass::Config,
            Error::Schema(_)
            | Error::Parse { .. }
            | Error::ShortFlight { .. }
            | Error::Alignment(_)
            | Error::Timestamps(_)
            | Error::InsufficientSamples { .. }
            | Error::InsufficientData(_)
            | Error::NonFinite(_)
            | Error::MissingClass(_)
            | Error::Label(_)
            | Error::UndefinedMetric(_)
            | Error::Csv(_) => ErrorClass::Data,
            Error::Dimension { .. } | Error::Compatibility(_) | Error::Integrity(_) | Error::Json(_) => {
                ErrorClass::Compatibility
            }
            Error::Training { .. } | Error::Internal(_) => ErrorClass::Internal,
        }
    }
}
