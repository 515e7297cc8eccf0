use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no connected topology found after {retries} retries")]
    NoConnectedTopology { retries: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("node {node} has no neighbors")]
    Isolated { node: usize },

    #[error("exact MWIS is limited to {cap} vertices, got {got}")]
    TooLarge { cap: usize, got: usize },

    #[error("policy has zero mass at node {node} for commodity {commodity}")]
    ZeroMass { node: usize, commodity: usize },

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("config value out of range: {field} = {value} ({expected})")]
    ConfigRange {
        field: &'static str,
        value: String,
        expected: &'static str,
    },

    #[error("malformed file {path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invariant violated at slot {slot}: {message}")]
    Invariant { slot: usize, message: String },

    #[error("plot error: {0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the user-facing configuration rather than the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::ConfigParse { .. } | Error::ConfigRange { .. } | Error::InvalidArgument(_)
        )
    }
}
