use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("block store integrity: {0}")]
    Integrity(String),

    #[error("predictor contract violation: {0}")]
    Contract(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<Path>, source: serde_json::Error) -> Self {
        Error::Parse {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// True for failures of the file system rather than of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
