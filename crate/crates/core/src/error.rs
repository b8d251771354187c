//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (geometry, counts, ranges).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the mathematical domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// A phase-kernel row integrates to zero and cannot be normalized.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// Time step violates the stability bound of the explicit scheme.
    #[error("stability error: {0}")]
    Cfl(String),

    /// Non-finite values appeared during time stepping.
    #[error("divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    /// Required data (inflow values, source samples) is missing or mis-shaped.
    #[error("incomplete data: {0}")]
    IncompleteData(String),

    /// Too few samples/reports for the requested analysis.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A hypothesis required by the stability theory does not hold
    /// (positive initial value, positive source factor at t = 0, bounds).
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// Observation horizon is below the minimum admissible time.
    #[error("observation time too small: {0}")]
    ObservationTime(String),

    /// A precondition of an inequality evaluation fails
    /// (e.g. nonzero terminal slice where a vanishing one is required).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Weighted boundary norms are defined only where the outward flux
    /// weight is positive.
    #[error("sign error: {0}")]
    SignConvention(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
