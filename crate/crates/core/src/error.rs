use std::path::PathBuf;

/// Errors raised by the library.
///
/// [`Error::is_validation`] separates bad input (malformed configs, shape
/// mismatches, out-of-range parameters) from faults that happen while a
/// valid request runs.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("numerical fault: {0}")]
    Numerical(String),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Json { .. } | Error::Csv { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
