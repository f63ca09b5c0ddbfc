use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("day {day} outside the basis range [{min}, {max}]")]
    Domain { day: f64, min: f64, max: f64 },

    #[error("fit did not converge after {iterations} iterations (last gradient norms: {trace:?})")]
    NoConvergence { iterations: usize, trace: Vec<f64> },

    #[error("perfect separation in the visit series; the maximum likelihood estimate does not exist, set ridge > 0")]
    Separation,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("diagnostics: {0}")]
    Diagnostics(String),

    #[error("curve does not reach 1 at the horizon: F({horizon}) = {value}")]
    Horizon { horizon: usize, value: f64 },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
