use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate Markov chain (p01 = 0 and p11 = 1): no unique stationary distribution")]
    DegenerateChain,

    #[error("posterior is indeterminate: the observed evidence has zero probability under the belief")]
    IndeterminatePosterior,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{channels} channels is too many for exact enumeration (limit {limit})")]
    TooManyChannels { channels: usize, limit: usize },

    #[error("no finite root: target {target} is not reachable (limit {limit})")]
    NoFiniteRoot { target: f64, limit: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
