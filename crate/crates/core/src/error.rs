use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Non-convergence of the branch solver is not an error; it is reported through
/// [`crate::grid::SolveOutcome`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("singular matrix: zero or non-finite pivot at row {row}")]
    SingularMatrix { row: usize },

    #[error("eigenvalue iteration did not converge after {iterations} steps (bracket width {width:e})")]
    EigenIteration { iterations: usize, width: f64 },

    #[error("bisection bracket invalid: {0}")]
    Bracket(String),

    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
