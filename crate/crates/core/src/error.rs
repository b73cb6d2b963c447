use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{what} = {value} outside tabulated range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("collocation grid of {grid} points cannot resolve {modes} modes (need at least {needed})")]
    Aliasing {
        modes: usize,
        grid: usize,
        needed: usize,
    },

    #[error("non-finite state at t = {t}")]
    BlowUp { t: f64 },

    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("weighted forcing integral does not converge: {0}")]
    Integrability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::BlowUp { .. } | Error::Integrability(_) => true,
            Error::Member { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
