//! File formats, the experiment harness and the command-line front end for
//! [`normprod_core`].

pub mod cli;
pub mod counting_file;
pub mod experiment;
pub mod presets;
pub mod report;
pub mod uai;

use std::path::PathBuf;

use normprod_core::counting::CountingError;
use normprod_core::engine::EngineError;
use normprod_core::generate::GenError;
use normprod_core::map_lp::MapError;
use normprod_core::oracle::OracleError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("model: {0}")]
    Uai(#[from] uai::UaiError),
    #[error("counting: {0}")]
    CountingFile(#[from] counting_file::CountingFileError),
    #[error("counting: {0}")]
    Counting(#[from] CountingError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
    #[error("map_lp: {0}")]
    Map(#[from] MapError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("model: {0}")]
    Gen(#[from] GenError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for usage and file-access problems, 2 for
    /// validation and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Usage(_) => 1,
            _ => 2,
        }
    }
}
