//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("wav decode error in {path}: {detail}")]
    WavDecode { path: PathBuf, detail: String },

    #[error("unsupported wav format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("buffer too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("too few frames for estimation: {frames}, need at least {min}")]
    TooFewFrames { frames: usize, min: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("insufficient tiles of label '{label}': need {needed}, have {available}")]
    InsufficientTiles {
        label: String,
        needed: usize,
        available: usize,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("singular design matrix: columns {0:?} are linearly dependent on earlier columns")]
    SingularDesign(Vec<String>),

    #[error("did not converge after {iterations} iterations (last objective {last:.6e})")]
    NoConvergence { iterations: usize, last: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("manifest error: {0}")]
    Manifest(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
