//! Learned replacement policy: recency/frequency features, a small scoring
//! network trained against Belady next-use distances, and the runtime policy
//! that evicts the expert with the largest predicted distance.

pub mod checkpoint;
pub mod dataset;
pub mod features;
pub mod net;
mod policy;
pub mod train;

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

pub use checkpoint::{load_net, save_net, NetSet};
pub use dataset::{build_dataset, DatasetConfig, LayerDataset, TrainingSample};
pub use features::{FeatureTracker, FeatureVector, LayerFeatures};
pub use net::EvictionNet;
pub use policy::{ml_policy_evict, MlPolicy};
pub use train::{train, EpochLog, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum MlError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no evictable expert: every resident expert is pinned")]
    NoEvictable,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("checkpoint shape mismatch: trace has {expected} experts, checkpoint has {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-layer training result, tagged with the layer it belongs to
/// (`None` for the shared network).
pub struct LayerTraining {
    pub layer: Option<usize>,
    pub outcome: TrainOutcome,
}

/// Trains one network per layer in parallel, or a single network on the
/// pooled samples when `shared` is set. Layer `l` is seeded with `seed + l`.
pub fn train_layers(
    datasets: &[LayerDataset],
    cfg: &TrainConfig,
    seed: u64,
    shared: bool,
) -> Result<(NetSet, Vec<LayerTraining>), MlError> {
    let Some(first) = datasets.first() else {
        return Err(MlError::EmptyDataset);
    };
    let e = first.num_experts;
    if shared {
        // keep each layer's validation tail at the end of the pooled set
        let split = |d: &LayerDataset| d.samples.len() - (d.samples.len() as f64 * cfg.val_fraction).floor() as usize;
        let mut pooled: Vec<TrainingSample> = Vec::new();
        for d in datasets {
            pooled.extend_from_slice(&d.samples[..split(d)]);
        }
        for d in datasets {
            pooled.extend_from_slice(&d.samples[split(d)..]);
        }
        let outcome = train(&pooled, e, cfg, seed)?;
        let set = NetSet::shared(outcome.net.clone(), datasets.len());
        return Ok((set, vec![LayerTraining { layer: None, outcome }]));
    }
    let outcomes: Vec<TrainOutcome> = datasets
        .par_iter()
        .map(|d| train(&d.samples, e, cfg, seed.wrapping_add(d.layer as u64)))
        .collect::<Result<_, _>>()?;
    let set = NetSet::per_layer(outcomes.iter().map(|o| o.net.clone()).collect());
    let runs = outcomes.into_iter().enumerate().map(|(l, outcome)| LayerTraining { layer: Some(l), outcome }).collect();
    Ok((set, runs))
}
