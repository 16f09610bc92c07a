use thiserror::Error;

/// Errors raised across the solver suite.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("closure mismatch: {0}")]
    ClosureMismatch(String),

    #[error("divergent diffusion: {0}")]
    DivergentDiffusion(String),

    #[error("moment history ends at t = {available}, requested t = {requested}")]
    MissingHistory { requested: f64, available: f64 },

    #[error("unsupported coefficient field: {0}")]
    UnsupportedCoefficient(String),

    #[error("assembly failed: {0}")]
    Assembly(String),

    #[error("singular matrix: zero pivot in column {column}")]
    Singular { column: usize },

    #[error("time step {step} (t = {time}) failed: {reason}")]
    StepFailure { step: usize, time: f64, reason: String },

    #[error("correction loop did not converge at step {step} (t = {time}) after {iterations} iterations, last |dR| = {residual:e}")]
    NonConvergent {
        step: usize,
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("stationarity not reached: {0}")]
    NotStationary(String),

    #[error("unsupported noise model: {0}")]
    UnsupportedNoise(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
