//! File formats, checkpoints, reports and the command-line driver around
//! [`transatt_core`].

use std::io;
use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embeddings;
pub mod exec;
pub mod report;
pub mod synth_io;
pub mod tsv;

pub use transatt_core as core;

/// Failure to read or write one of the data files.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: {source}", path.display())]
    Embeddings {
        path: PathBuf,
        source: transatt_core::encoder::EmbeddingParseError,
    },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: u64, msg: String) -> Self {
        DataError::Parse { path: path.to_path_buf(), line, msg }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        DataError::Json { path: path.to_path_buf(), source }
    }
}
