use thiserror::Error;

/// Errors surfaced by constellation construction, estimators and searches.
#[derive(Debug, Error)]
pub enum GmacError {
    #[error("unsupported constellation: {kind} with M = {m}")]
    UnsupportedConstellation { kind: String, m: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("trellis error: {0}")]
    Trellis(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GmacError>;
