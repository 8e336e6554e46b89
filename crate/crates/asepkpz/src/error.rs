use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("negative rate {name} = {value:e}; epsilon too large for the given slopes")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("bracketing failed for root {k}: g(lo) = {g_lo:e}, g(hi) = {g_hi:e}")]
    Bracketing { k: usize, g_lo: f64, g_hi: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("requested grid outside trajectory: {0}")]
    OutOfRange(String),
    #[error("did not converge: {0}")]
    NoConvergence(String),
    #[error("stability violation: {0}")]
    Unstable(String),
}

pub type Result<T> = std::result::Result<T, Error>;
