use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("support error: {0}")]
    Support(String),

    #[error("incompatible variational state: {0}")]
    Incompatible(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(
        "component {component} lost all responsibility (total {mass:.3e}); \
         restart with a different seed or fewer components"
    )]
    EmptyCluster { component: usize, mass: f64 },

    #[error("newton iteration for {what} did not converge after {iterations} steps")]
    NewtonNonConvergence { what: &'static str, iterations: usize },

    #[error("degenerate covariance: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn support(msg: impl Into<String>) -> Error {
    Error::Support(msg.into())
}
