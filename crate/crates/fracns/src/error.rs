use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("support breach: {0}")]
    SupportBreach(String),
    #[error("time stepping became unstable at tau = {tau}: norm {norm:e}")]
    Unstable { tau: f64, norm: f64 },
    #[error("solver did not converge: {0}")]
    NoConvergence(String),
    #[error("{file}: {msg} (offset {offset})")]
    Format {
        file: String,
        offset: u64,
        msg: String,
    },
    #[error("unsupported SSNF version {0}")]
    UnsupportedVersion(u32),
    #[error("config error: {0}")]
    Config(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
