use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid market: {0}")]
    InvalidMarket(String),
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("enumeration limit exceeded: {n_players} players x {n_arms} arms (limit {limit})")]
    EnumerationLimit {
        n_players: usize,
        n_arms: usize,
        limit: usize,
    },
    #[error("gram matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("at least two arms are required to define a preference gap")]
    TooFewArms,
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
