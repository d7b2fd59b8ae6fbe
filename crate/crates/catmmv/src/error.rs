use std::fmt;

use thiserror::Error;

/// One violated parameter constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} must be {}", self.field, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("quadrature failed on [{a}, {b}]: estimated error {err:e} above tolerance {tol:e}")]
    QuadratureFailure { a: f64, b: f64, err: f64, tol: f64 },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("non-finite state on path {path} at t = {t}")]
    NonFiniteState { path: u64, t: f64 },

    #[error("{failed} of {total} paths failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid simulation setup: {0}")]
    Config(String),
}

impl Error {
    /// True for errors caused by the inputs rather than by a numerical routine.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Config(_))
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
