use thiserror::Error;

use crate::prob::Violation;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A probability vector, kernel or joint table failed validation.
    #[error("validation error: {0}")]
    Validation(#[from] Violation),
    /// Mismatched alphabets, overlapping axis sets and similar caller mistakes.
    #[error("argument error: {0}")]
    Argument(String),
    /// Parameters outside the analytical domain (e.g. P < 1 for the Gaussian lower bound).
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent protocol or optimizer configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// An enumeration or codebook would exceed the stated desk-scale budget.
    #[error("size error: {what} requires {required} > budget {budget}")]
    Size {
        what: String,
        required: u128,
        budget: u128,
    },
    /// A numerical routine failed to converge; carries the residual estimate.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn size(what: impl Into<String>, required: u128, budget: u128) -> Self {
        Error::Size {
            what: what.into(),
            required,
            budget,
        }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
