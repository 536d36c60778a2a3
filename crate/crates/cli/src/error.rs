use std::path::PathBuf;

use ocscreen_core::{CheckpointError, DatasetError, ImageError, NetworkError, SweepError, SynthError, TrainError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: ImageError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Serve(String),
}

impl CliError {
    /// 0 success, 1 runtime failure, 2 usage error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Train(TrainError::InvalidHyperParams(_) | TrainError::ZeroBatch) => 2,
            // zero count or an unwritable output directory
            CliError::Synth(SynthError::ZeroCount | SynthError::Io { .. }) => 2,
            _ => 1,
        }
    }
}

pub fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
