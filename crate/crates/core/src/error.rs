use thiserror::Error;

/// Errors raised by the regularization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate:e})")]
    PowerIteration { iterations: usize, estimate: f64 },

    #[error("solve at alpha[{index}] = {alpha:e} failed: {reason}")]
    PathSolve {
        index: usize,
        alpha: f64,
        reason: String,
    },

    #[error("alpha grids differ at index {index}")]
    GridMismatch { index: usize },

    #[error("Bregman distance {value:e} is negative beyond slack; xi is not a subgradient at x_from")]
    InvalidSubgradient { value: f64 },

    #[error("no admissible grid point: {0}")]
    NoAdmissiblePoint(String),

    #[error("discrepancy bracket fails: {0}")]
    Bracket(String),

    #[error("bisection stopped after {steps} steps at alpha = {alpha:e}: residual {residual:e}, target {target:e}")]
    Bisection {
        steps: usize,
        alpha: f64,
        residual: f64,
        target: f64,
    },

    #[error("{0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
