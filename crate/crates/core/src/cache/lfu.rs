use super::{argmin_by_key, EvictionPolicy};
use crate::trace::ExpertId;

/// Least frequently used, counting every access since the sequence started.
///
/// Counts survive eviction and are cleared when a new sequence begins.
#[derive(Debug, Clone)]
pub struct LfuPolicy {
    count: Vec<u64>,
}

impl LfuPolicy {
    pub fn new(num_experts: usize) -> Self {
        Self { count: vec![0; num_experts] }
    }

    pub fn count(&self, expert: ExpertId) -> u64 {
        self.count[expert]
    }
}

impl EvictionPolicy for LfuPolicy {
    fn name(&self) -> &'static str {
        "lfu"
    }

    fn begin_sequence(&mut self) {
        self.count.fill(0);
    }

    fn on_hit(&mut self, expert: ExpertId, _pos: usize) {
        self.count[expert] += 1;
    }

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], _pos: usize) -> ExpertId {
        argmin_by_key(candidates, |e| self.count[e])
    }

    fn on_insert(&mut self, expert: ExpertId, _pos: usize) {
        self.count[expert] += 1;
    }
}
