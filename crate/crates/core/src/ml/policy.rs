use std::sync::Arc;

use super::features::LayerFeatures;
use super::net::EvictionNet;
use super::MlError;
use crate::cache::{AccessGroup, EvictionPolicy};
use crate::trace::{ExpertId, Phase};

/// Evicts the resident, unpinned expert with the largest predicted distance.
/// Ties go to the smallest expert id.
pub fn ml_policy_evict(resident: &[ExpertId], scores: &[f64], pinned: &[ExpertId]) -> Result<ExpertId, MlError> {
    let mut best: Option<ExpertId> = None;
    let mut sorted: Vec<ExpertId> = resident.iter().copied().filter(|e| !pinned.contains(e)).collect();
    sorted.sort_unstable();
    for e in sorted {
        match best {
            Some(b) if scores[e].total_cmp(&scores[b]).is_le() => {}
            _ => best = Some(e),
        }
    }
    best.ok_or(MlError::NoEvictable)
}

/// Runtime learned policy for one layer: features are advanced and the
/// network is evaluated once per access group, and evictions pick the
/// maximum predicted distance.
pub struct MlPolicy {
    net: Arc<EvictionNet>,
    features: LayerFeatures,
    input: Vec<f64>,
    scores: Vec<f64>,
    include_prefill: bool,
}

impl MlPolicy {
    pub fn new(net: Arc<EvictionNet>, include_prefill: bool) -> Self {
        let e = net.num_experts();
        Self { net, features: LayerFeatures::new(e), input: vec![0.0; 2 * e], scores: vec![0.0; e], include_prefill }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn features(&self) -> &LayerFeatures {
        &self.features
    }
}

impl EvictionPolicy for MlPolicy {
    fn name(&self) -> &'static str {
        "ml"
    }

    fn begin_sequence(&mut self) {
        self.features.reset();
    }

    fn begin_group(&mut self, group: &AccessGroup) {
        if group.phase == Phase::Decode || self.include_prefill {
            for routed in group.routed_steps() {
                self.features.update(routed);
            }
        }
        self.features.normalize_into(&mut self.input);
        self.scores = self.net.score(&self.input).expect("network sized for this layer");
    }

    fn on_hit(&mut self, _expert: ExpertId, _pos: usize) {}

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], _pos: usize) -> ExpertId {
        ml_policy_evict(candidates, &self.scores, &[]).expect("candidates are non-empty")
    }

    fn on_insert(&mut self, _expert: ExpertId, _pos: usize) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn argmax_examples() {
        let mut s = vec![0.0; 8];
        s[2] = 0.9;
        s[5] = 0.1;
        assert_eq!(ml_policy_evict(&[2, 5], &s, &[]).unwrap(), 2);
        assert_eq!(ml_policy_evict(&[2, 5], &s, &[2]).unwrap(), 5);
        let s = vec![0.4; 8];
        assert_eq!(ml_policy_evict(&[7, 3], &s, &[]).unwrap(), 3);
        assert!(matches!(ml_policy_evict(&[2], &s, &[2]), Err(MlError::NoEvictable)));
    }

    proptest! {
        #[test]
        fn shift_invariant(scores in prop::collection::vec(-5.0f64..5.0, 10), shift in -100.0f64..100.0,
                           resident in prop::collection::btree_set(0usize..10, 1..10)) {
            let resident: Vec<_> = resident.into_iter().collect();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            // shifting can merge nearly-equal scores through rounding; compare on well-separated inputs
            let mut vals: Vec<f64> = resident.iter().map(|&e| scores[e]).collect();
            vals.sort_by(f64::total_cmp);
            prop_assume!(vals.windows(2).all(|w| w[1] - w[0] > 1e-9));
            prop_assert_eq!(ml_policy_evict(&resident, &scores, &[]).unwrap(),
                            ml_policy_evict(&resident, &shifted, &[]).unwrap());
        }
    }
}
