use std::path::PathBuf;

use thiserror::Error;

use crate::cmd::CmdError;
use crate::linalg::LinalgError;
use crate::nnet::NetError;
use crate::rngdist::DistError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("solver failure in realization {realization}: {message}")]
    Solver { realization: usize, message: String },
    #[error("training {role} network: {source}")]
    Training {
        role: String,
        #[source]
        source: NetError,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Cmd(#[from] CmdError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

pub type Result<T> = std::result::Result<T, Error>;
