use super::{argmin_by_key, EvictionPolicy};
use crate::trace::ExpertId;

/// Least recently used.
#[derive(Debug, Clone)]
pub struct LruPolicy {
    last_use: Vec<usize>,
}

impl LruPolicy {
    pub fn new(num_experts: usize) -> Self {
        Self { last_use: vec![0; num_experts] }
    }
}

impl EvictionPolicy for LruPolicy {
    fn name(&self) -> &'static str {
        "lru"
    }

    fn on_hit(&mut self, expert: ExpertId, pos: usize) {
        self.last_use[expert] = pos;
    }

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], _pos: usize) -> ExpertId {
        argmin_by_key(candidates, |e| self.last_use[e])
    }

    fn on_insert(&mut self, expert: ExpertId, pos: usize) {
        self.last_use[expert] = pos;
    }
}
