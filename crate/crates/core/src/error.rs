use thiserror::Error;

use crate::tebd::GroundState;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain size: {0}")]
    InvalidSize(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("state corruption: {0}")]
    Corruption(String),
    #[error("basis of size {size} exceeds capacity {cap}")]
    Capacity { size: u128, cap: usize },
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("imaginary-time evolution did not converge within {} steps", .0.steps)]
    NonConvergence(Box<GroundState>),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_site(index: usize, n: usize) -> Result<()> {
    if index == 0 || index > n {
        Err(Error::IndexOutOfRange { index, max: n })
    } else {
        Ok(())
    }
}
