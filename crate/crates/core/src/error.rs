use thiserror::Error;

/// Errors produced by validation and by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("noise structure mismatch: operation expects {expected}, model is {got}")]
    StructureMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("entry ({row},{col}) = {value} breaks the block-diagonal-plus-upper form")]
    NotBlockForm { row: usize, col: usize, value: f64 },

    #[error("{context} did not converge (last estimate {last_estimate})")]
    NonConvergence {
        context: &'static str,
        last_estimate: f64,
    },

    #[error("no scaling t <= 2^60 brings the strictly-upper part below kappa = {kappa}")]
    BalanceUnreachable { kappa: f64 },

    #[error("degenerate draws: {skipped} of {total} samples produced a zero matrix")]
    DegenerateDraws { skipped: usize, total: usize },

    #[error("analytic margin not stabilizing: {0}")]
    MarginNotStabilizing(String),

    #[error("no rho in (2, {max_rho}] yields a satisfied stability certificate")]
    NoCertifiableRho { max_rho: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
