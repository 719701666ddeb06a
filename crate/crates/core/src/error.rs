use thiserror::Error;

/// Errors raised by the ranking operators, losses and oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("input of size {size} exceeds the supported maximum {max}")]
    TooLarge { size: usize, max: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}
