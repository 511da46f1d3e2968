//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum CbiError {
    /// Arguments violate a documented precondition of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Parameters do not define a valid mechanism or model.
    #[error("invalid mechanism: {0}")]
    Mechanism(String),
    /// A numerical routine could not certify its result.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The operation is not available for this mechanism form.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CbiError>;

impl CbiError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CbiError::Domain(msg.into())
    }
    pub fn mechanism(msg: impl Into<String>) -> Self {
        CbiError::Mechanism(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        CbiError::Numeric(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        CbiError::Unsupported(msg.into())
    }
}
