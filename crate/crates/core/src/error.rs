use thiserror::Error;

use crate::wire::WireError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no built-in irreducible polynomial of degree {0}")]
    UnsupportedDegree(usize),

    #[error("exhaustive enumeration over 2^{n} seeds is infeasible (limit 2^{limit})")]
    EnumerationInfeasible { n: usize, limit: usize },

    #[error("insecure channel parameters: need n > 2l, got n = {n}, l = {l}")]
    InsecureParameters { n: usize, l: usize },

    #[error("key pool exhausted: requested {requested} bits, {available} available")]
    PoolExhausted { requested: usize, available: usize },

    #[error("invalid security budget: {0}")]
    InvalidBudget(String),

    #[error("parameter estimation failed: {0}")]
    Estimation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("wire error: {0}")]
    Wire(#[from] WireError),

    #[error("session error: {0}")]
    Session(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
