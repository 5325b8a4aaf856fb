use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} header: {reason}")]
    Header {
        format: &'static str,
        reason: String,
    },
    #[error("truncated {format} payload: expected {expected} bytes, found {found}")]
    Truncated {
        format: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("unsupported {format} version {found} (expected {expected})")]
    Version {
        format: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("codebook size mismatch: weights were trained with {stored} directions, {requested} requested")]
    CodebookMismatch { stored: usize, requested: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("no true-positive points; accuracy is undefined")]
    NoTruePositives,
    #[error("found {found} ostium candidates, need {needed}")]
    TooFewOstia { found: usize, needed: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn header(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Header {
            format,
            reason: reason.into(),
        }
    }
}
