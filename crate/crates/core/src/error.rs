use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Rejected input: a parameter violated its domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Rejected input: operand dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Rejected input: an operand was empty.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The regularization ladder was exhausted without reaching the
    /// conditioning target.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// A Cholesky or eigendecomposition failed.
    #[error("factorization failure: {0}")]
    Factorization(String),

    /// Hyperparameter optimization could not produce a model.
    #[error("training failure: {0}")]
    Training(String),

    /// A numerical consistency check failed (beyond roundoff tolerance).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A serialized artifact did not match the expected schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// Configuration file errors.
    #[error("config error: {0}")]
    Config(String),

    /// WAV encoding/decoding errors.
    #[error("wav error: {0}")]
    Wav(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
