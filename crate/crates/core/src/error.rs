use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtlasError {
    /// Input outside the domain of an operation (bad z, bad sector, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Malformed user input.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical procedure failed to reach its target.
    #[error("numeric failure: {msg} (achieved {achieved:e})")]
    Numeric { msg: String, achieved: f64 },
}

impl AtlasError {
    pub fn domain(msg: impl Into<String>) -> Self {
        AtlasError::Domain(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        AtlasError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>, achieved: f64) -> Self {
        AtlasError::Numeric {
            msg: msg.into(),
            achieved,
        }
    }
}

pub type Result<T> = std::result::Result<T, AtlasError>;
