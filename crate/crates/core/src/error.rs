use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate embedding: pre-normalization norm {0:e} is below 1e-12")]
    DegenerateEmbedding(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("lookup failed: {0}")]
    Missing(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment or malformed files rather
    /// than by invalid values.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Image { .. } | Error::Json(_) | Error::Format(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
