use thiserror::Error;

/// Errors raised by the library. Each variant names the stage that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("zero denominator in coefficient at byte {pos}")]
    ZeroDenominator { pos: usize },

    #[error("variable count mismatch: expected {expected}, found {found}")]
    NvarsMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("polynomial has odd degree {0}; a sum of squares needs even degree")]
    OddDegree(u32),

    #[error("monomial {0} is not a product of two basis monomials")]
    Unrepresentable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("constraint system is inconsistent: b is not in the range of A")]
    Infeasible,

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
