use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("point cannot be projected onto the manifold: {0}")]
    Unprojectable(String),

    #[error("ambiguous geodesic: {0}")]
    Ambiguous(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// The cause is part of the message rather than the source chain, so
    /// it prints once under both `{}` and `{:#}`.
    #[error("i/o error on {path}: {cause}")]
    Io { path: String, cause: std::io::Error },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            cause: source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }
}
