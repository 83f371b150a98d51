//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FunqError {
    #[error("index must be >= 1, got {0}")]
    InvalidIndex(i64),

    #[error("{model} has no explicit eigenbasis")]
    NoExplicitBasis { model: String },

    #[error("codebook points must be strictly increasing (violation at position {position})")]
    UnsortedPoints { position: usize },

    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("quantizer budget must be >= 1")]
    EmptyBudget,

    #[error("theta must lie in (0,1), got {0}")]
    InvalidTheta(f64),

    #[error("parameter {name} must lie in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("regular-variation index b must exceed 1 for rate formulas, got b = {0}")]
    IndexTooSmall(f64),

    #[error("enumeration of {size} codewords exceeds the limit of {limit}")]
    EnumerationTooLarge { size: u128, limit: u128 },

    #[error("brute-force search supports budgets up to {max}, got {n}")]
    BudgetTooLarge { n: u64, max: u64 },

    #[error("capacity table has no C({0}) entry")]
    MissingCapacity(usize),

    #[error("rate prediction needs n >= 3, got {0}")]
    LevelTooSmall(u64),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
