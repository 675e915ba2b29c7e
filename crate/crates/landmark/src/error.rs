use std::path::Path;

/// Failure of a command, classified by exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad user input: configuration, manifests, flags. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Anything that went wrong while doing valid work. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 1,
            Error::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Error::Runtime(format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with `context`.
    pub fn context(self, context: impl std::fmt::Display) -> Self {
        match self {
            Error::Validation(m) => Error::Validation(format!("{context}: {m}")),
            Error::Runtime(m) => Error::Runtime(format!("{context}: {m}")),
        }
    }
}

impl From<landmark_core::Error> for Error {
    fn from(e: landmark_core::Error) -> Self {
        use landmark_core::Error as E;
        match e {
            E::NonFiniteLoss { .. } | E::Observer(_) => Error::Runtime(e.to_string()),
            _ => Error::Validation(e.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Input file that must exist, checked before any work starts.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Validation(format!("{what} not found: {}", path.display())))
    }
}
