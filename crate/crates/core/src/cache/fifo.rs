use super::{argmin_by_key, EvictionPolicy};
use crate::trace::ExpertId;

#[derive(Debug, Clone)]
pub struct FifoPolicy {
    inserted_at: Vec<usize>,
}

impl FifoPolicy {
    pub fn new(num_experts: usize) -> Self {
        Self { inserted_at: vec![0; num_experts] }
    }
}

impl EvictionPolicy for FifoPolicy {
    fn name(&self) -> &'static str {
        "fifo"
    }

    fn on_hit(&mut self, _expert: ExpertId, _pos: usize) {}

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], _pos: usize) -> ExpertId {
        argmin_by_key(candidates, |e| self.inserted_at[e])
    }

    fn on_insert(&mut self, expert: ExpertId, pos: usize) {
        self.inserted_at[expert] = pos;
    }
}
