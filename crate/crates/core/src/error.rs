use std::path::PathBuf;
use thiserror::Error;
use tokenwalk_nn::NnError;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input data.
    #[error("{context}: {message}")]
    Input { context: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A precondition on the graph (e.g. connectivity) does not hold.
    #[error("{0}")]
    Graph(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Nn(NnError),
}

impl Error {
    pub fn input(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Input {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite values during training.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Nn(NnError::NonFinite { .. })
        )
    }
}

impl From<NnError> for Error {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite { .. } => Error::Numeric(e.to_string()),
            other => Error::Nn(other),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Reads a whole file, attaching the path to any I/O error.
pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
