use thiserror::Error;

/// Errors raised by the state algebra, forward model, measurement model,
/// simulator and reconstruction.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violates a structural or physical precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A density matrix failed validation (Hermiticity, trace, positivity).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Parameters outside the physical domain of the model (for example an
    /// OPO driven above threshold).
    #[error("domain error: {0}")]
    Domain(String),

    /// Density matrix expressed in a basis the operation does not accept.
    #[error("basis mismatch: expected {expected:?}, got {got:?}")]
    BasisMismatch {
        expected: crate::state::Basis,
        got: crate::state::Basis,
    },

    /// An iterative numerical method failed to produce a usable answer.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
