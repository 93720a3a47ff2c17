//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by probability primitives, solvers, and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A probability was outside `[0, 1]` or not finite.
    #[error("invalid probability {value}")]
    InvalidProbability { value: f64 },

    /// A conditional probability table failed validation.
    #[error("invalid signal model: {0}")]
    InvalidModel(String),

    /// A signal index does not address a row of the model.
    #[error("signal index {signal} out of range for model with {n} signals")]
    SignalOutOfRange { signal: usize, n: usize },

    /// Parallel model/signal lists of different lengths.
    #[error("length mismatch: {models} models vs {signals} signals")]
    LengthMismatch { models: usize, signals: usize },

    /// A posterior hit exactly 0 or 1 where a formula divides by it.
    #[error("degenerate belief: posterior is exactly 0 or 1")]
    DegenerateBelief,

    /// A parameter violated its documented domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The adjustment term left the range where the deviation bound is defined.
    #[error("delta {delta} outside valid range ({lo}, {hi})")]
    OutOfRange { delta: f64, lo: f64, hi: f64 },

    /// The solver could not locate a root (reserved for numerical failure).
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Inconsistent market or audit configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An interior belief was required but a boundary value was supplied.
    #[error("belief on the simplex boundary where an interior point is required")]
    BoundaryBelief,
}

pub type Result<T> = std::result::Result<T, Error>;
