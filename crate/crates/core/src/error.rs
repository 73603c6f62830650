use thiserror::Error;

use crate::curves::CurveFamily;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The curve formula is undefined for the given inputs.
    #[error("domain error: {0}")]
    Domain(String),

    /// No size in the searched range reaches the target.
    #[error("target {target} unreachable (best score {best} at n = {n_hi})")]
    Unreachable { target: f64, best: f64, n_hi: u64 },

    #[error("{family} model is not monotone on [{n_lo}, {n_hi}]")]
    NotMonotone {
        family: CurveFamily,
        n_lo: f64,
        n_hi: f64,
    },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("every curve family failed to fit")]
    AllFailed,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no family produced a finite estimate")]
    NoEstimates,

    #[error("invalid target {0}: not reachable on the ground-truth curve")]
    InvalidTarget(f64),

    #[error("no tau <= {tau_max} meets every calibration target")]
    CalibrationFailed { tau_max: f64 },

    #[error("empty input")]
    EmptyInput,
}
