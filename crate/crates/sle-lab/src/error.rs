//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the numerical kernels and the Monte Carlo harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two marked points collide (or a point sits on a pole of a vector field).
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    /// Divisors carrying different background parameters were combined.
    #[error("mixed background charges: {0} vs {1}")]
    MixedBackground(String, String),
    /// A value cannot be expressed in the requested chart.
    #[error("chart error: {0}")]
    Chart(String),
    /// The neutrality condition required by an operation is violated.
    #[error("neutrality violated: total charge {total}, expected {target}")]
    Neutrality { total: String, target: String },
    /// Some other precondition of an operation does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// A marked point hit the singularity of a Loewner vector field.
    #[error("pole collision: {0}")]
    Pole(String),
    /// The requested point has been swallowed by the hull.
    #[error("point {0} has been swallowed")]
    Swallowed(String),
    /// Adaptive step halving reached the minimal step size.
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    /// A multivalued observable jumped by too much between two steps.
    #[error("phase jump of {0} rad exceeds the unwrapping limit")]
    PhaseJump(f64),
    /// A statistical procedure had too little data to produce an answer.
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    /// Malformed configuration or request.
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
