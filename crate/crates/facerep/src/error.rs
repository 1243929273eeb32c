use std::path::PathBuf;

use facerep_core::eval::EvalError;
use facerep_core::faceproc::AlignError;
use facerep_core::forge::ForgeError;
use facerep_core::network::NetworkError;
use facerep_core::trainer::TrainError;

use crate::checkpoint::CheckpointError;
use crate::formats::ParseError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("{}: {source}", path.display())]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: CheckpointError },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn parse(path: impl Into<PathBuf>) -> impl FnOnce(ParseError) -> Self {
        let path = path.into();
        move |source| Error::Parse { path, source }
    }

    /// Process exit code: 3 for numerical failures, 2 for everything else
    /// (bad or missing data). Usage errors never reach this type.
    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            Error::Network(NetworkError::NonFinite { .. }) => true,
            Error::Train(TrainError::NonFinite { .. }) => true,
            Error::Train(TrainError::Network(NetworkError::NonFinite { .. })) => true,
            Error::Forge(ForgeError::Embedding(NetworkError::NonFinite { .. })) => true,
            Error::Eval(e) => matches!(e, EvalError::Singular(_) | EvalError::NonFinite | EvalError::ZeroNorm),
            _ => false,
        };
        if numerical {
            3
        } else {
            2
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
