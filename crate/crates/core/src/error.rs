use thiserror::Error;

/// Errors produced by the lens library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LensError {
    /// A traced ray came within the exclusion radius of a point mass.
    #[error("ray obstructed by mass {mass} in plane {plane}")]
    Obstruction { plane: usize, mass: usize },

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("length mismatch for {field}: expected {expected}, got {actual}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value produced while evaluating {0}")]
    NonFinite(&'static str),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("search failed: {0}")]
    Search(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),
}

impl LensError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        LensError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LensError>;
