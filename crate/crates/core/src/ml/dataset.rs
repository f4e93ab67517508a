//! Belady-labelled training data.
//!
//! Each layer is replayed under Belady's policy. At every decode step, after
//! the feature update, one sample is emitted: the normalized features, the
//! clamped distance (in time steps) to each expert's next routing, and a mask
//! of the experts the oracle cache could evict at that step (resident and not
//! routed by the step itself).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::features::LayerFeatures;
use crate::cache::{layer_streams, BeladyPolicy, ExpertCache, LayerOracle, LayerStream};
use crate::trace::{ExpertId, Phase, RoutingTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Distances are clamped to this many steps and divided by it.
    pub d_max: usize,
    /// Whether prompt tokens advance the recency/frequency scores.
    pub include_prefill_features: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { d_max: 64, include_prefill_features: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDataset {
    pub layer: usize,
    pub num_experts: usize,
    pub samples: Vec<TrainingSample>,
}

/// `min(distance, d_max) / d_max`, and `1.0` for "never again".
pub fn normalize_distance(distance: Option<usize>, d_max: usize) -> f64 {
    match distance {
        Some(d) => d.min(d_max) as f64 / d_max as f64,
        None => 1.0,
    }
}

/// Time-step index of every routing of every expert in one layer. A prompt
/// contributes one time step per token, a decode event one.
struct StepIndex {
    steps: Vec<Vec<usize>>,
}

impl StepIndex {
    fn build(stream: &LayerStream) -> Self {
        let mut steps = vec![Vec::new(); stream.num_experts];
        let mut t = 0;
        for g in &stream.groups {
            for routed in g.routed_steps() {
                for &e in routed {
                    steps[e].push(t);
                }
                t += 1;
            }
        }
        Self { steps }
    }

    fn next_distance(&self, expert: ExpertId, t: usize) -> Option<usize> {
        let s = &self.steps[expert];
        s.get(s.partition_point(|&x| x <= t)).map(|&n| n - t)
    }
}

pub fn build_layer_dataset(stream: &LayerStream, capacity: usize, cfg: &DatasetConfig) -> LayerDataset {
    let e = stream.num_experts;
    let oracle = Arc::new(LayerOracle::build(stream));
    let steps = StepIndex::build(stream);
    let mut cache = ExpertCache::new(e, capacity, Box::new(BeladyPolicy::new(oracle)));
    let mut features = LayerFeatures::new(e);
    let mut samples = Vec::new();
    let mut t = 0usize;
    let mut prev_seq = None;

    for g in &stream.groups {
        if prev_seq != Some(g.seq_id) {
            features.reset();
            cache.begin_sequence();
            prev_seq = Some(g.seq_id);
        }
        match g.phase {
            Phase::Prefill => {
                for routed in g.routed_steps() {
                    if cfg.include_prefill_features {
                        features.update(routed);
                    }
                    t += 1;
                }
                for (pos, &x) in g.positions().zip(&g.experts) {
                    cache.access(x, pos, &[]);
                }
            }
            Phase::Decode => {
                features.update(&g.experts);
                let now = t;
                t += 1;
                let mut mask = vec![false; e];
                for r in cache.resident() {
                    mask[r] = true;
                }
                for &x in &g.experts {
                    mask[x] = false;
                }
                let targets = (0..e).map(|x| normalize_distance(steps.next_distance(x, now), cfg.d_max)).collect();
                samples.push(TrainingSample { features: features.normalize().0, targets, mask });
                for (pos, &x) in g.positions().zip(&g.experts) {
                    cache.access(x, pos, &g.experts);
                }
            }
        }
    }
    LayerDataset { layer: stream.layer, num_experts: e, samples }
}

/// One dataset per layer of `trace`, replayed at the given cache capacity.
pub fn build_dataset(trace: &RoutingTrace, capacity: usize, cfg: &DatasetConfig) -> Vec<LayerDataset> {
    layer_streams(trace).iter().map(|s| build_layer_dataset(s, capacity, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{AccessEvent, TraceHeader};

    fn decode_trace(steps: &[&[usize]]) -> RoutingTrace {
        let k = steps[0].len();
        let events = steps
            .iter()
            .enumerate()
            .map(|(i, s)| AccessEvent {
                seq_id: 0,
                phase: Phase::Decode,
                step: i as u64,
                layer: 0,
                experts: s.to_vec(),
            })
            .collect();
        RoutingTrace::new(TraceHeader::new("t", 1, 6, k), events).unwrap()
    }

    #[test]
    fn distance_normalization() {
        assert_eq!(normalize_distance(Some(3), 64), 0.046875);
        assert_eq!(normalize_distance(Some(64), 64), 1.0);
        assert_eq!(normalize_distance(Some(500), 64), 1.0);
        assert_eq!(normalize_distance(None, 64), 1.0);
    }

    #[test]
    fn one_sample_per_decode_step_with_targets_and_mask() {
        let t = decode_trace(&[&[0], &[1], &[2], &[0], &[3], &[1]]);
        let ds = build_dataset(&t, 2, &DatasetConfig { d_max: 4, include_prefill_features: true });
        assert_eq!(ds.len(), 1);
        let s = &ds[0].samples;
        assert_eq!(s.len(), 6);
        // step 0: expert 0 next routed at step 3 -> 3/4; expert 1 at 1 -> 1/4; expert 5 never
        assert_eq!(s[0].targets[0], 0.75);
        assert_eq!(s[0].targets[1], 0.25);
        assert_eq!(s[0].targets[5], 1.0);
        // step 2 (expert 2): resident {0,1} under Belady, neither routed now
        assert_eq!(s[2].mask, vec![true, true, false, false, false, false]);
        // step 2 loads 2 and evicts 1 (next use at step 5, farther than 0 at step 3)
        assert_eq!(s[3].mask, vec![false, false, true, false, false, false]);
        // features reflect the current step
        assert_eq!(s[1].features[1], 1.0);
        assert_eq!(s[1].features[0], 0.5);
    }

    #[test]
    fn targets_stay_in_unit_interval() {
        use crate::trace::{generate_trace, SyntheticWorkloadConfig};
        let cfg = SyntheticWorkloadConfig { num_seqs: 2, decode_steps: 100, prefill_tokens: 8, ..Default::default() };
        let t = generate_trace(&TraceHeader::new("s", 2, 16, 4), &cfg).unwrap();
        let ds = build_dataset(&t, 8, &DatasetConfig::default());
        for layer in &ds {
            assert_eq!(layer.samples.len(), 200);
            for s in &layer.samples {
                assert!(s.targets.iter().all(|&x| (0.0..=1.0).contains(&x)));
                assert!(s.features.iter().all(|&x| (0.0..=1.0).contains(&x)));
                assert!(s.mask.iter().filter(|&&m| m).count() <= 8);
            }
        }
    }
}
