use std::time::Duration;

use thiserror::Error;

use crate::model::AgentId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density {density} yields {edges} edges, fewer than the {required} required for a connected graph on {agents} agents")]
    DensityTooLow {
        density: f64,
        edges: usize,
        required: usize,
        agents: usize,
    },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("constraint graph is not connected")]
    Disconnected,

    #[error("bad assignment: {0}")]
    BadAssignment(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("search space of {size} assignments exceeds the brute-force cap of {cap}")]
    BruteForceCap { size: u128, cap: u128 },

    #[error("simulation deadlock: {waiting} agents still running with no messages in flight")]
    Deadlock { waiting: usize },

    #[error("run exceeded the {0:?} timeout")]
    Timeout(Duration),

    #[error("unknown algorithm: {0}")]
    UnknownAlgorithm(String),

    #[error("protocol violation at agent {agent}: {detail}")]
    Protocol { agent: AgentId, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed instance file: {0}")]
    Malformed(#[from] serde_json::Error),
}
