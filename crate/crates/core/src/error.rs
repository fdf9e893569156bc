use thiserror::Error;

/// Errors raised by the algebra engine.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("no exact quotient exists at this truncation: {0}")]
    NotDivisible(String),

    #[error("epsilon degree {degree} exceeds the configured cap {cap}")]
    EpsilonCapExceeded { degree: u32, cap: u32 },

    #[error("the prime 2 is not supported here")]
    PrimeTwoUnsupported,

    #[error("coordinate systems do not match: {0}")]
    CoordinateMismatch(String),

    #[error("internal identity check failed: {0}")]
    AssertionFailure(String),

    #[error("local data could not be patched together: {0}")]
    AssemblyInconsistent(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Short machine-readable tag used in CLI error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotDivisible(_) => "NotDivisible",
            Error::EpsilonCapExceeded { .. } => "EpsilonCapExceeded",
            Error::PrimeTwoUnsupported => "PrimeTwoUnsupported",
            Error::CoordinateMismatch(_) => "CoordinateMismatch",
            Error::AssertionFailure(_) => "AssertionFailure",
            Error::AssemblyInconsistent(_) => "AssemblyInconsistent",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Parse(_) => "Parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
