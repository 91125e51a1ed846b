//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChiError {
    /// Malformed input (bad dimensions, bad labels, invalid parameter
    /// records, unreadable configs). Maps to CLI exit code 2.
    #[error("config error: {0}")]
    Config(String),

    #[error("unknown factor label `{0}`")]
    UnknownLabel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    /// Numerical integration failed its own sanity checks.
    #[error("integration failure: {0}")]
    Integration(String),

    /// A physically inconsistent request (resonant detuning, mismatched
    /// pair couplings, lost projection weight). Maps to CLI exit code 3.
    #[error("physics error: {0}")]
    Physics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ChiError {
    /// Stable CLI exit code contract: 2 for config errors, 3 for physics
    /// and numerical errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            ChiError::Config(_)
            | ChiError::UnknownLabel(_)
            | ChiError::DimensionMismatch(_)
            | ChiError::SpaceMismatch(_)
            | ChiError::Io(_)
            | ChiError::Json(_) => 2,
            ChiError::NotHermitian(_)
            | ChiError::Integration(_)
            | ChiError::Physics(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ChiError>;
