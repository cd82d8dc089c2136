use thiserror::Error;

/// Failure modes surfaced by grid construction, path handling, evaluation,
/// and flow inversion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected} path, got {got}")]
    PathKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("path is incompatible with the scenario: {0}")]
    GridMismatch(String),

    #[error("{0}")]
    UnknownId(String),

    #[error("formula undefined at x={x}, t={t}: {reason}")]
    Domain { x: f64, t: f64, reason: String },

    #[error("entry requires the {0} path functional, none was supplied")]
    MissingFunctional(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("t={t} lies past the first fold time {tau_inv}")]
    PastTauInv { t: f64, tau_inv: f64 },

    #[error("y={y} is not covered by the characteristic fan at t={t}")]
    NotCovered { y: f64, t: f64 },

    #[error("non-finite characteristic state at t={t}")]
    NonFiniteState { t: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
