//! Error type shared by every stage of the toolkit.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A mathematical quantity is undefined for the given input.
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or solve failed numerically.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed or inconsistent input data (manifests, images, model files).
    #[error("data error: {0}")]
    Data(String),

    /// The evaluation protocol cannot be satisfied by the supplied data.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Wraps an error with the pipeline stage in which it happened.
    #[error("[{stage}] {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line front-end:
    /// 2 argument error, 3 data/protocol error, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Data(_) | Error::Protocol(_) | Error::Io { .. } => 3,
            Error::Domain(_) | Error::Numerical(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

/// Attaches a stage tag to the error side of a result.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
