use thiserror::Error;

/// Errors raised by the solvers, estimators and file readers.
#[derive(Debug, Error)]
pub enum FbpError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} at index {index} is outside [0,1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("tabulated profile does not cover [{need_lo}, {need_hi}] (data spans [{have_lo}, {have_hi}])")]
    NotCovered {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("initial condition is not monotone non-increasing")]
    NotMonotone,

    #[error("window [{have_lo}, {have_hi}] too small, need at least [{need_lo}, {need_hi}]")]
    WindowTooSmall {
        need_lo: f64,
        need_hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("time step {dt} exceeds stability limit {limit}")]
    Unstable { dt: f64, limit: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FbpError>;
