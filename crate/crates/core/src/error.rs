use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("profile leaves the simplex at grid point {point}: {detail}")]
    OutsideSimplex { point: usize, detail: String },

    #[error("thinning bound violated at t = {t}: rate {rate} exceeds majorant {majorant}")]
    BoundViolation { t: f64, rate: f64, majorant: f64 },

    #[error("event {index} is inconsistent with the path: {detail}")]
    InconsistentEvent { index: usize, detail: String },

    #[error("step rejected after {halvings} halvings at t = {t}")]
    StepRejected { t: f64, halvings: u32 },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("value out of enumeration range: {0}")]
    RangeExceeded(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
