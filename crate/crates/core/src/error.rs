use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum VipError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("triangular matrix is singular (zero diagonal at {index})")]
    Singular { index: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("non-finite loss at iteration {iteration} (term: {term})")]
    NonFinite { iteration: usize, term: String },

    #[error("unsupported model format version {0}")]
    FormatVersion(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VipError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        VipError::Dimension { op, detail: detail.into() }
    }

    /// True for failures that stem from numerics rather than inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            VipError::NotPositiveDefinite { .. } | VipError::Singular { .. } | VipError::NonFinite { .. }
        )
    }

    /// True for failures caused by malformed input data.
    pub fn is_data(&self) -> bool {
        matches!(self, VipError::Parse { .. } | VipError::Data(_) | VipError::Io(_) | VipError::FormatVersion(_) | VipError::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, VipError>;
