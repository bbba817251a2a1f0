use thiserror::Error;

/// Errors raised by the dynamics library.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid input: {0}")]
    Input(String),

    /// A normalized map was applied to an operator whose image has (numerically) zero trace.
    /// This marks a trajectory of measure zero.
    #[error("null outcome: trace {trace:e} is below the null threshold")]
    NullOutcome { trace: f64 },

    /// The implicit Volterra step could not be resolved at the requested step size.
    #[error("step size too large: {0}; use a finer grid")]
    StepSize(String),

    /// The Laplace-domain resolvent is singular at a contour node.
    #[error("resolvent singular at u = {re} + {im}i; rescale the inversion contour")]
    ContourRescale { re: f64, im: f64 },

    /// The requested operation is not available for this model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
