use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("subsystem {index} out of range (space has {count} subsystems)")]
    SubsystemOutOfRange { index: usize, count: usize },
    #[error("index exceeds truncation: {0}")]
    Truncation(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("resonance singularity: {0}")]
    Resonance(String),
    #[error("integrator failure at t = {t:e} s: {reason}")]
    Integrator { t: f64, reason: String },
    #[error("fit failure: {0}")]
    Fit(String),
    #[error("Floquet label tracking failed at grid point {index} (overlap {overlap:.3})")]
    Tracking { index: usize, overlap: f64 },
    #[error("branch collision at gate {gate}: {detail}")]
    BranchCollision { gate: usize, detail: String },
    #[error("program validation failed: {0}")]
    Validation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("missing calibration entry: {0}")]
    MissingCalibration(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("optimization did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
