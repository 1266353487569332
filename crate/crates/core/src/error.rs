use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("ring parameter mismatch: ({n_a}, {bits_a} bits) vs ({n_b}, {bits_b} bits)")]
    RingMismatch {
        n_a: usize,
        bits_a: u32,
        n_b: usize,
        bits_b: u32,
    },

    #[error("capacity exceeded: {what} needs {needed} coefficients but N = {n}")]
    Capacity {
        what: &'static str,
        needed: usize,
        n: usize,
    },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("no feasible tile: {0}")]
    Infeasible(String),

    #[error("filter list is empty")]
    EmptyFilters,

    #[error("noise budget exceeded: bound 2^{bound_bits:.1} > budget 2^{budget_bits}")]
    NoiseBudget { bound_bits: f64, budget_bits: u32 },

    #[error("share party mismatch: {0}")]
    PartyMismatch(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
