use thiserror::Error;

/// Failure modes of the solver, grouped by how a caller should react.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter or argument is outside its admissible domain.
    #[error("invalid input: {0}")]
    Validation(String),
    /// A modelling assumption required for existence fails at these parameters
    /// (single crossing, entry-cost bounds, positive entry, investment region).
    #[error("assumption violated: {0}")]
    Assumption(String),
    /// A numerical routine did not reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// The requested feature exists in the interface but has no implementation.
    #[error("not implemented: {0}")]
    NotImplemented(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefix the message with the pipeline stage that produced it.
    pub fn at(self, stage: &str) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{stage}: {m}")),
            Error::Assumption(m) => Error::Assumption(format!("{stage}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{stage}: {m}")),
            Error::NotImplemented(m) => Error::NotImplemented(format!("{stage}: {m}")),
        }
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Validation(msg()))
    }
}
