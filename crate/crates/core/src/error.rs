use std::io;
use std::path::PathBuf;

use crate::trainer::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration or invalid arguments.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file. `location` is a line number or a sample id.
    #[error("{}: {location}: {message}", file.display())]
    Parse {
        file: PathBuf,
        location: String,
        message: String,
    },

    /// Data that parsed but violates an invariant (shapes, indices, missing splits).
    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Training produced a non-finite loss. The history up to that point is kept.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        history: Box<TrainHistory>,
    },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(file: impl Into<PathBuf>, location: impl ToString, message: impl ToString) -> Self {
        Error::Parse {
            file: file.into(),
            location: location.to_string(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Parse { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::Diverged { .. } => 3,
        }
    }
}
