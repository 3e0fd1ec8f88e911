//! Crate-wide error type.
//!
//! Domain violations (bad Hurst indices, empty boxes, non-PSD matrices after
//! jitter escalation) are `Err` values naming the offending parameter.
//! Numerical-tolerance failures inside verification checks are not errors;
//! they surface as failed verdicts in the check reports.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A numerical routine failed in a way that cannot be reported as a verdict.
    #[error("numerical failure in {context}: {reason}")]
    Numerical { context: &'static str, reason: String },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn numerical(context: &'static str, reason: impl Into<String>) -> Self {
        Error::Numerical {
            context,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
