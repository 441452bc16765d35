//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by validation and numerical failure paths.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A field or vector had the wrong length for the lattice.
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    /// A time argument fell outside the valid range.
    #[error("time {t} outside valid range [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    /// Joint state space too large for the exact solver.
    #[error("state-space budget exceeded: {states} states > {budget}")]
    StateSpaceBudget { states: usize, budget: usize },

    /// The integrator produced a non-finite value.
    #[error("numerical blow-up at t={t}: {detail} (substep h={h})")]
    NumericalBlowup { t: f64, h: f64, detail: String },

    /// A required constant was missing or infinite.
    #[error("required constant unavailable: {0}")]
    MissingConstant(String),

    /// Two results that must refer to the same configuration do not.
    #[error("mismatched configurations: {0}")]
    ConfigMismatch(String),

    /// Configuration document failed validation; all violations listed.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    ConfigInvalid(Vec<String>),

    /// I/O failure while persisting or loading results.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
