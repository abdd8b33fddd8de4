//! Error type shared by the whole crate.

use std::fmt;

/// Errors reported by validators, solvers and projections.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Problem parameters outside their admissible range.
    Params(String),
    /// Argument outside the mathematical domain of a special function.
    Domain(String),
    /// Two discretized objects do not share the same discretization.
    Mismatch(String),
    /// Nearest-bubble projection failed (non-convergence or out of trust region).
    Projection(String),
    /// A solver (Newton, time stepper, eigensolver, linear solve) failed.
    Solver(String),
    /// Invalid input to a diagnostic routine.
    Input(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Params(m) => write!(f, "invalid parameters: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Mismatch(m) => write!(f, "discretization mismatch: {m}"),
            Error::Projection(m) => write!(f, "projection failure: {m}"),
            Error::Solver(m) => write!(f, "solver failure: {m}"),
            Error::Input(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
