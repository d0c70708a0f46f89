use thiserror::Error;

/// Errors produced by the hinm library.
#[derive(Debug, Error)]
pub enum HinmError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("budget error: {0}")]
    Budget(String),
    #[error("grouping error: {0}")]
    Grouping(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("negative saliency score {value} at ({row}, {col})")]
    NegativeScore { row: usize, col: usize, value: f64 },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("count error: {0}")]
    Count(String),
    #[error("cost matrix error: {0}")]
    Cost(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("index {index} out of range for {len} input rows")]
    Index { index: usize, len: usize },
    #[error("search space of {size} candidates exceeds the limit of {limit}")]
    SizeGuard { size: String, limit: u64 },
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    ShapeOrFile,
    SizeGuard,
    Internal,
}

impl HinmError {
    pub fn class(&self) -> ErrorClass {
        match self {
            HinmError::Dimension(_) | HinmError::Value(_) | HinmError::Budget(_) => ErrorClass::Config,
            HinmError::ShapeMismatch { .. }
            | HinmError::NegativeScore { .. }
            | HinmError::NonFinite { .. }
            | HinmError::Index { .. }
            | HinmError::Format(_)
            | HinmError::Io(_)
            | HinmError::Json(_) => ErrorClass::ShapeOrFile,
            HinmError::SizeGuard { .. } => ErrorClass::SizeGuard,
            HinmError::Grouping(_)
            | HinmError::Capacity(_)
            | HinmError::Count(_)
            | HinmError::Cost(_)
            | HinmError::InvariantViolation(_) => ErrorClass::Internal,
        }
    }
}

pub type Result<T> = std::result::Result<T, HinmError>;
