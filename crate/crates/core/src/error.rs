use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("covariance is numerically degenerate (smallest eigenvalue {smallest_eigenvalue:e})")]
    Degenerate { smallest_eigenvalue: f64 },

    #[error("{rejected} of {total} Monte Carlo samples produced non-finite values")]
    NonFinite { rejected: u64, total: u64 },

    #[error("optimizer hit its iteration cap (best value {best}, gap estimate {gap:e})")]
    OptimizerCap { best: f64, gap: f64 },

    #[error("inadmissible control: norm {norm} exceeds radius {radius}")]
    Inadmissible { norm: f64, radius: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
