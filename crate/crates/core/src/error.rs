use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    /// No grid cell met the FDP cap. Carries the best cell seen.
    #[error("calibration infeasible: best achievable fdp {best_fdp:.4} at p={p}, p_hat={p_hat}")]
    CalibrationInfeasible { best_fdp: f64, p: f64, p_hat: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
