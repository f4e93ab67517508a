//! Future-knowledge index for Belady's MIN policy.

use super::stream::LayerStream;
use crate::trace::ExpertId;

/// Access positions of every expert in one layer's stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerOracle {
    positions: Vec<Vec<usize>>,
}

impl LayerOracle {
    pub fn build(stream: &LayerStream) -> Self {
        let mut positions = vec![Vec::new(); stream.num_experts];
        for (pos, e) in stream.accesses().enumerate() {
            positions[e].push(pos);
        }
        Self { positions }
    }

    pub fn from_positions(positions: Vec<Vec<usize>>) -> Self {
        debug_assert!(positions.iter().all(|p| p.windows(2).all(|w| w[0] < w[1])));
        Self { positions }
    }

    /// Smallest stored position strictly after `pos`.
    pub fn next_use(&self, expert: ExpertId, pos: usize) -> Option<usize> {
        let p = &self.positions[expert];
        p.get(p.partition_point(|&x| x <= pos)).copied()
    }

    /// `next_use - pos`, or `None` when the expert is never accessed again.
    pub fn next_use_distance(&self, expert: ExpertId, pos: usize) -> Option<usize> {
        self.next_use(expert, pos).map(|n| n - pos)
    }

    pub fn positions(&self, expert: ExpertId) -> &[usize] {
        &self.positions[expert]
    }
}

/// Per-layer [`LayerOracle`]s for a whole trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleIndex {
    layers: Vec<LayerOracle>,
}

impl OracleIndex {
    pub fn build(streams: &[LayerStream]) -> Self {
        Self { layers: streams.iter().map(LayerOracle::build).collect() }
    }

    pub fn layer(&self, layer: usize) -> &LayerOracle {
        &self.layers[layer]
    }

    pub fn into_layers(self) -> Vec<LayerOracle> {
        self.layers
    }

    pub fn next_use_distance(&self, layer: usize, expert: ExpertId, pos: usize) -> Option<usize> {
        self.layers[layer].next_use_distance(expert, pos)
    }
}

/// Orders distances with "never again" as the largest value.
pub fn distance_key(d: Option<usize>) -> usize {
    d.unwrap_or(usize::MAX)
}
