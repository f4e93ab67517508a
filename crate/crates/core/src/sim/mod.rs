//! Trace replay through per-layer expert caches, with hit/miss and I/O
//! accounting, the load/compute overlap latency estimate, eviction
//! diagnostics and the VRAM-based cache size estimate.

mod budget;
mod cost;
mod diag;
mod engine;
mod policy;

use thiserror::Error;

pub use budget::{cache_size_calc, HardwareBudget};
pub use cost::CostModel;
pub use diag::{eviction_quality_duel, refetch_rate, DuelOutcome};
pub use engine::{
    simulate, EvictionRecord, Record, SimOptions, SimReport, SimRun, Simulator, TimelineKind, TimelineRow,
    REPORT_SCHEMA_VERSION,
};
pub use policy::{PolicyConfig, POLICY_NAMES};

use crate::ml::MlError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("capacity {capacity} is smaller than top_k {top_k}: one event's experts must fit in the cache")]
    CapacityTooSmall { capacity: usize, top_k: usize },
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("the ml policy needs trained networks (run `train` first or pass --checkpoints)")]
    MissingNetworks,
    #[error("networks cover {found} layers, trace has {expected}")]
    LayerMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Ml(#[from] MlError),
}
