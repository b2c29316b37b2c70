use std::path::PathBuf;

use thiserror::Error;

use crate::data::DataError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible checkpoint: {field} is {checkpoint} in the checkpoint but {config} in the configuration")]
    Incompatible {
        field: &'static str,
        checkpoint: String,
        config: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch} (window starts {starts:?})")]
    NonFinite {
        epoch: usize,
        batch: usize,
        starts: Vec<usize>,
    },
    #[error("gradient check failed for: {0}")]
    Gradcheck(String),
    #[error("{0}")]
    Contract(String),
}

impl Error {
    /// Short machine-readable category used by the command-line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "numeric",
            Error::Data(DataError::Config(_)) => "config",
            Error::Data(DataError::Io { .. }) => "io",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Checkpoint(_) | Error::Incompatible { .. } => "checkpoint",
            Error::Io { .. } => "io",
            Error::NonFinite { .. } => "numeric",
            Error::Gradcheck(_) => "gradcheck",
            Error::Contract(_) => "contract",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
