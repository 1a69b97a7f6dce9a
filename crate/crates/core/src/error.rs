use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("collocation grid needs at least one point, got {0}")]
    InvalidGridSize(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("interpolation nodes must be distinct")]
    DuplicateNodes,
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("callback `{callback}` returned {got} values, expected {expected}")]
    CallbackDimension { callback: &'static str, expected: usize, got: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("error estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
