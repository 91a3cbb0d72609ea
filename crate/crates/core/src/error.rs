use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The potential was evaluated exactly at one of its poles.
    #[error("singular point: potential evaluated at pole {index} located at {location:?}")]
    Singularity { index: usize, location: Vec<f64> },

    /// An iterative or bracketing procedure failed to produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Inputs are individually valid but inconsistent with each other.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// A computation would exceed its configured work budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// Every sample of a field fell inside the near-zero band.
    #[error("degenerate field: {0}")]
    DegenerateField(String),

    /// A caller-supplied object violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Internal bookkeeping found the inputs mutually inconsistent.
    #[error("inconsistent inputs: {0}")]
    Inconsistency(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
