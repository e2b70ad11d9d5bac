use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for {len} bands")]
    BandOutOfRange { index: usize, len: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("tracker not initialized")]
    Uninitialized,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("frame {frame} truncated ({path}): expected {expected} bytes, found {actual}")]
    TruncatedFrame {
        frame: usize,
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("geometry mismatch in {context}: {detail}")]
    Geometry { context: String, detail: String },

    #[error("bad tensor archive: {0}")]
    Archive(String),
}

impl Error {
    /// Short machine-readable tag used by the CLI error payload.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::InvalidInput(_) => "invalid_input",
            Error::BandOutOfRange { .. } => "band_out_of_range",
            Error::Singular(_) => "singular",
            Error::Uninitialized => "uninitialized",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::TruncatedFrame { .. } => "truncated_frame",
            Error::Geometry { .. } => "geometry",
            Error::Archive(_) => "archive",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
