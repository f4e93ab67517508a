use std::cmp::Reverse;
use std::sync::Arc;

use super::oracle::{distance_key, LayerOracle};
use super::{argmin_by_key, EvictionPolicy};
use crate::trace::ExpertId;

/// Belady's MIN: evict the candidate whose next use lies farthest ahead.
#[derive(Debug, Clone)]
pub struct BeladyPolicy {
    oracle: Arc<LayerOracle>,
}

impl BeladyPolicy {
    pub fn new(oracle: Arc<LayerOracle>) -> Self {
        Self { oracle }
    }
}

impl EvictionPolicy for BeladyPolicy {
    fn name(&self) -> &'static str {
        "belady"
    }

    fn on_hit(&mut self, _expert: ExpertId, _pos: usize) {}

    fn choose_victim(&mut self, _incoming: ExpertId, candidates: &[ExpertId], pos: usize) -> ExpertId {
        argmin_by_key(candidates, |e| Reverse(distance_key(self.oracle.next_use_distance(e, pos))))
    }

    fn on_insert(&mut self, _expert: ExpertId, _pos: usize) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::ExpertCache;

    #[test]
    fn evicts_farthest_next_use() {
        // stream A B | C A B: at C (pos 2) A is next used at 3, B at 4
        let stream = [0usize, 1, 2, 0, 1];
        let mut pos = vec![Vec::new(); 3];
        for (i, &e) in stream.iter().enumerate() {
            pos[e].push(i);
        }
        let oracle = Arc::new(LayerOracle::from_positions(pos));
        let mut c = ExpertCache::new(3, 2, Box::new(BeladyPolicy::new(oracle)));
        let d: Vec<_> = stream.iter().enumerate().map(|(p, &e)| c.access(e, p, &[])).collect();
        assert_eq!(d[2].evicted, Some(1));
        assert!(d[3].was_hit);
    }

    #[test]
    fn ties_go_to_smallest_id() {
        // neither 4 nor 6 is used again
        let mut pos = vec![Vec::new(); 8];
        pos[4] = vec![0];
        pos[6] = vec![1];
        pos[7] = vec![2];
        let oracle = Arc::new(LayerOracle::from_positions(pos));
        let mut c = ExpertCache::new(8, 2, Box::new(BeladyPolicy::new(oracle)));
        c.access(4, 0, &[]);
        c.access(6, 1, &[]);
        assert_eq!(c.access(7, 2, &[]).evicted, Some(4));
    }
}
