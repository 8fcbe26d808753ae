use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state representation is incompatible with the policy: {0}")]
    IncompatibleState(String),
    #[error("action has zero probability under the policy")]
    ZeroProbabilityAction,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not {0}")]
    Definiteness(&'static str),
    #[error("no strictly feasible point: {0}")]
    NoSlaterPoint(String),
    #[error("bisection failed to bracket the multiplier: {0}")]
    Bracketing(String),
    #[error("empty record")]
    EmptyRecord,
    #[error("bound certificates need exact oracles; record was produced by {0}")]
    StochasticRecord(&'static str),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            actual,
        }
    }
}
