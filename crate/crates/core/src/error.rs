use thiserror::Error;

/// Errors raised by the numerical and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates the precondition of the operation that received it.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A payoff table violates the dilemma ordering T > R > P > S.
    #[error("payoff ordering violated: {0}")]
    PayoffOrdering(String),

    /// The integrator had to repair the simplex by more than the allowed amount.
    #[error("simplex correction {correction:e} at t = {t} exceeds tolerance {tolerance:e}; reduce the step size")]
    SimplexDrift {
        t: f64,
        correction: f64,
        tolerance: f64,
    },

    /// Probability leaked out of the master-equation state space.
    #[error("probability not conserved at t = {t}: total = {total}")]
    ProbabilityLeak { t: f64, total: f64 },

    #[error("phase boundary undefined for gamma* = {0} (requires gamma* < pi/4)")]
    BoundaryOutOfDomain(f64),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
