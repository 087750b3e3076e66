use thiserror::Error;

/// Errors raised by estimation, tuning and evaluation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs violate a structural precondition (shapes, ranges, invariants).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A component lost (almost) all of its responsibility mass.
    #[error("component {component} is empty (mass {mass:.3e} below {threshold:.3e})")]
    EmptyComponent {
        component: usize,
        mass: f64,
        threshold: f64,
    },

    /// Every candidate of a search failed.
    #[error("no valid result: {0}")]
    NoValidResult(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
