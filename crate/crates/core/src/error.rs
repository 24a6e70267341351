use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(&'static str),

    #[error("empty problem instance")]
    EmptyInstance,

    #[error("invalid distance {0} km (must be > 0)")]
    InvalidDistance(f64),

    #[error("invalid capacity: {0}")]
    InvalidCapacity(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("allocator protocol violation: requested ({blocks}, {units}) but system has ({max_blocks}, {max_units})")]
    ProtocolViolation {
        blocks: u32,
        units: u32,
        max_blocks: u32,
        max_units: u32,
    },

    #[error("ledger violation at t={time}: {used_blocks}/{max_blocks} blocks, {used_units}/{max_units} units")]
    LedgerViolation {
        time: f64,
        used_blocks: u32,
        used_units: u32,
        max_blocks: u32,
        max_units: u32,
    },

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("all entries are masked")]
    EmptySupport,

    #[error("dimension mismatch: checkpoint is for M={ckpt_blocks}, N={ckpt_units}; expected M={blocks}, N={units}")]
    DimensionMismatch {
        ckpt_blocks: u32,
        ckpt_units: u32,
        blocks: u32,
        units: u32,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
