//! Crate-wide error type for recoverable failures. Shape misuse inside the
//! numeric hot paths panics instead; see the `ndnet` module docs.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("maze file error: {0}")]
    MazeFormat(String),

    #[error("matching infeasible: {0}")]
    Matching(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FrontierError>;
