use thiserror::Error;

/// Errors raised by the particle and correlation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate configuration: particles {i} and {j} coincide")]
    Overlap { i: usize, j: usize },
    #[error("non-finite value in particle state after step {step}")]
    NonFinite { step: u64 },
    #[error("non-positive temperature {temperature} at particle {index}")]
    NonPositiveTemperature { index: usize, temperature: f64 },
    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max lag {max_lag} too large for a series of length {len}")]
    MaxLagTooLarge { max_lag: usize, len: usize },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("state equation: {0}")]
    StateEquation(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
