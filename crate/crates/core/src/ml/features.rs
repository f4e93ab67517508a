//! Recency and frequency scores per expert, and their normalized form.

use crate::trace::ExpertId;

/// Recency/frequency state of one layer.
///
/// `recency[e]` is `None` until `e` is first routed, then the number of steps
/// since its last routing counting the current one (so `1` right after it is
/// routed). `frequency[e]` counts routings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerFeatures {
    recency: Vec<Option<u64>>,
    frequency: Vec<u64>,
    max_frequency: u64,
}

impl LayerFeatures {
    pub fn new(num_experts: usize) -> Self {
        Self { recency: vec![None; num_experts], frequency: vec![0; num_experts], max_frequency: 0 }
    }

    pub fn num_experts(&self) -> usize {
        self.frequency.len()
    }

    pub fn reset(&mut self) {
        self.recency.fill(None);
        self.frequency.fill(0);
        self.max_frequency = 0;
    }

    /// Advances one time step with `routed` as the step's routed set.
    pub fn update(&mut self, routed: &[ExpertId]) {
        for r in self.recency.iter_mut().flatten() {
            *r += 1;
        }
        for &e in routed {
            self.recency[e] = Some(1);
            self.frequency[e] += 1;
            self.max_frequency = self.max_frequency.max(self.frequency[e]);
        }
    }

    pub fn recency(&self, expert: ExpertId) -> Option<u64> {
        self.recency[expert]
    }

    pub fn frequency(&self, expert: ExpertId) -> u64 {
        self.frequency[expert]
    }

    pub fn max_frequency(&self) -> u64 {
        self.max_frequency
    }

    /// Writes `[1/r_e for all e ‖ f_e/max_f for all e]` into `out` (length 2E).
    pub fn normalize_into(&self, out: &mut [f64]) {
        let e = self.num_experts();
        assert_eq!(out.len(), 2 * e);
        let (rec, freq) = out.split_at_mut(e);
        for (o, r) in rec.iter_mut().zip(&self.recency) {
            *o = r.map_or(0.0, |r| 1.0 / r as f64);
        }
        if self.max_frequency == 0 {
            freq.fill(0.0);
        } else {
            let m = self.max_frequency as f64;
            for (o, &f) in freq.iter_mut().zip(&self.frequency) {
                *o = f as f64 / m;
            }
        }
    }

    pub fn normalize(&self) -> FeatureVector {
        let mut v = vec![0.0; 2 * self.num_experts()];
        self.normalize_into(&mut v);
        FeatureVector(v)
    }
}

/// Feature state for every layer of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureTracker {
    layers: Vec<LayerFeatures>,
}

impl FeatureTracker {
    pub fn new(num_layers: usize, num_experts: usize) -> Self {
        Self { layers: vec![LayerFeatures::new(num_experts); num_layers] }
    }

    pub fn update(&mut self, layer: usize, routed: &[ExpertId]) {
        self.layers[layer].update(routed);
    }

    pub fn normalize(&self, layer: usize) -> FeatureVector {
        self.layers[layer].normalize()
    }

    pub fn layer(&self, layer: usize) -> &LayerFeatures {
        &self.layers[layer]
    }

    pub fn reset(&mut self) {
        self.layers.iter_mut().for_each(LayerFeatures::reset);
    }
}

/// Network input: normalized recency of experts `0..E` followed by
/// normalized frequency of experts `0..E`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn recency_norm(&self) -> &[f64] {
        &self.0[..self.0.len() / 2]
    }

    pub fn frequency_norm(&self) -> &[f64] {
        &self.0[self.0.len() / 2..]
    }
}
