use thiserror::Error;

/// Failures surfaced by the library. The CLI maps these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("solution diverged: {0}")]
    Divergence(String),

    #[error("singular parameter: {0}")]
    SingularParameter(String),

    #[error("corrupt data: {0}")]
    CorruptData(String),

    #[error("incompatible artifacts: {0}")]
    Incompatible(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }

    /// Prefix the message with the stage or item that failed.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{what}: {m}")),
            Error::NumericalFailure(m) => Error::NumericalFailure(format!("{what}: {m}")),
            Error::Divergence(m) => Error::Divergence(format!("{what}: {m}")),
            Error::SingularParameter(m) => Error::SingularParameter(format!("{what}: {m}")),
            Error::CorruptData(m) => Error::CorruptData(format!("{what}: {m}")),
            Error::Incompatible(m) => Error::Incompatible(format!("{what}: {m}")),
            other => other,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
