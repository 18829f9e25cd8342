use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network layout: {0}")]
    Layout(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("divergence detected: {0}")]
    Divergence(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `floor(n * (1 - alpha))` is zero, so no atom falls in the lower tail.
    #[error("CVaR level {alpha} too extreme for {n} atoms")]
    LevelTooExtreme { alpha: f64, n: usize },

    #[error("replay pool holds {have} transitions, {need} requested")]
    InsufficientData { have: usize, need: usize },

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
