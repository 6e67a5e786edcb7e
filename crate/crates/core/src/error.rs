use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two grid functions that must share a grid do not.
    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,

    /// Iterative solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Non-finite values or runaway growth during time stepping.
    #[error("blow-up at t = {t:.4}: {detail}")]
    BlowUp { t: f64, detail: String },

    /// Decay fit could not be performed on the given samples.
    #[error("fit error: {0}")]
    Fit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
