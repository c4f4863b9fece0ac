use thiserror::Error;

/// Errors raised by the simulation and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowup { step: u64, time: f64 },

    #[error("fixed-point iteration failed to contract: {0}")]
    Convergence(String),

    #[error("snapshot coverage: {0}")]
    Coverage(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain too small: boundary mass {boundary_mass:.3e} at s = {s}")]
    DomainTooSmall { s: f64, boundary_mass: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
