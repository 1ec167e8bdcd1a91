use thiserror::Error;

/// Errors surfaced by the bound computation stack.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A polynomial needed by the relaxation has a monomial that no pair of
    /// basis words can reach.
    #[error("monomial {word} is outside the span of the moment basis; increase the level")]
    IncreaseLevel { word: String },

    /// The SDP has no feasible point. `certified` is true when a Farkas-type
    /// dual ray was verified, false when the verdict is heuristic.
    #[error("problem is infeasible ({})", if *certified { "certified" } else { "heuristic" })]
    Infeasible { certified: bool },

    /// The interior-point iteration stalled before reaching tolerance.
    #[error("solver made no further progress after {iterations} iterations (gap {gap:.3e})")]
    SlowProgress { iterations: usize, gap: f64 },

    /// The approximate dual point could not be purified into a rigorous bound.
    #[error("dual certificate rejected: required shift {delta:.3e} exceeds threshold {threshold:.3e}")]
    Certification { delta: f64, threshold: f64 },

    /// Numerical integration did not reach the requested accuracy.
    #[error("quadrature did not converge (error estimate {estimate:.3e})")]
    Quadrature { estimate: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
