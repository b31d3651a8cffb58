use bm_core::fvec::FvecError;
use bm_core::pipeline::PipelineError;
use bm_core::HeError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors a server reports back in an ERROR frame.
#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
pub enum WireError {
    #[error("key parameters do not match the server configuration")]
    KeyRejected,
    #[error("no keys uploaded yet")]
    NotReady,
    #[error("index {index} exceeds capacity {capacity}")]
    CapacityExceeded { index: u64, capacity: u64 },
    #[error("slot {0} is already occupied")]
    SlotOccupied(u64),
    #[error("unknown message type {0}")]
    UnknownMessage(u8),
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("key parameters do not match the server configuration")]
    KeyRejected,
    #[error("no keys uploaded yet")]
    NotReady,
    #[error("index {index} exceeds capacity {capacity}")]
    CapacityExceeded { index: u64, capacity: u64 },
    #[error("slot {0} is already occupied")]
    SlotOccupied(u64),
    #[error("shard {shard} missed its deadline")]
    ShardTimeout { shard: usize },
    #[error("could not decrypt result: {0}")]
    DecryptionFailure(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("server error: {0}")]
    Remote(String),
    #[error("config: {0}")]
    Config(String),
    #[error("persisted state is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    He(#[from] HeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Fvec(#[from] FvecError),
}

impl From<WireError> for ClusterError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::KeyRejected => Self::KeyRejected,
            WireError::NotReady => Self::NotReady,
            WireError::CapacityExceeded { index, capacity } => Self::CapacityExceeded { index, capacity },
            WireError::SlotOccupied(i) => Self::SlotOccupied(i),
            other => Self::Remote(other.to_string()),
        }
    }
}

impl From<PipelineError> for WireError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::SlotOccupied(i) => Self::SlotOccupied(i as u64),
            PipelineError::CapacityExceeded { index, capacity } => Self::CapacityExceeded {
                index: index as u64,
                capacity: capacity as u64,
            },
            PipelineError::He(HeError::KeyMismatch) => Self::KeyRejected,
            other => Self::Malformed(other.to_string()),
        }
    }
}

impl From<HeError> for WireError {
    fn from(e: HeError) -> Self {
        match e {
            HeError::KeyMismatch => Self::KeyRejected,
            other => Self::Malformed(other.to_string()),
        }
    }
}

impl From<ClusterError> for WireError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::KeyRejected => Self::KeyRejected,
            ClusterError::NotReady => Self::NotReady,
            ClusterError::CapacityExceeded { index, capacity } => Self::CapacityExceeded { index, capacity },
            ClusterError::SlotOccupied(i) => Self::SlotOccupied(i),
            ClusterError::He(e) => e.into(),
            ClusterError::Pipeline(e) => e.into(),
            other => Self::Internal(other.to_string()),
        }
    }
}
