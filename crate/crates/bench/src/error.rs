use std::path::PathBuf;

use mapfrd_core::calibrate::CalibrateError;
use thiserror::Error;

use crate::config::ConfigError;
use crate::maps::MapError;

/// Errors that abort a whole command. Failures of single instances are
/// collected in the command's report instead.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("starting predictor `{command}`: {reason}")]
    Predictor { command: String, reason: String },
    #[error("{}: {reason}", path.display())]
    Manifest { path: PathBuf, reason: String },
    #[error("split `{0}` of the dataset is empty")]
    EmptySplit(String),
    #[error("evaluation compares at least two methods, got {0}")]
    TooFewMethods(usize),
    #[error("calibrating {map} with {agents} agents: {source}")]
    Calibrate {
        map: String,
        agents: usize,
        #[source]
        source: CalibrateError,
    },
}

impl BenchError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
        let path = path.into();
        move |source| BenchError::Io { path, source }
    }
}
