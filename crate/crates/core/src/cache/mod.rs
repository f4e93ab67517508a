//! Fixed-capacity per-layer expert caches and their replacement policies.
//!
//! [`ExpertCache`] owns the resident set and enforces the capacity and pin
//! rules; an [`EvictionPolicy`] only keeps its own bookkeeping and names a
//! victim when asked. Candidates are always handed to the policy in ascending
//! expert order, and every built-in policy breaks ties by taking the first
//! (smallest id) candidate.

mod arc;
mod belady;
mod fifo;
mod lecar;
mod lfu;
mod lru;
pub mod oracle;
pub mod stream;

pub use arc::ArcPolicy;
pub use belady::BeladyPolicy;
pub use fifo::FifoPolicy;
pub use lecar::{lecar_update, GhostList, LecarParams, LecarPolicy};
pub use lfu::LfuPolicy;
pub use lru::LruPolicy;
pub use oracle::{distance_key, LayerOracle, OracleIndex};
pub use stream::{layer_streams, AccessGroup, LayerStream};

use crate::trace::ExpertId;

/// Outcome of one expert access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDecision {
    pub evicted: Option<ExpertId>,
    pub loaded: ExpertId,
    pub was_hit: bool,
}

/// Replacement-policy bookkeeping driven by [`ExpertCache`].
///
/// For a miss the cache calls `on_miss`, then `choose_victim` if the cache is
/// full, then `on_insert`. `choose_victim` must return one of `candidates`
/// and drop the victim from the policy's own structures.
pub trait EvictionPolicy: Send {
    fn name(&self) -> &'static str;

    /// An independent inference sequence starts.
    fn begin_sequence(&mut self) {}

    /// Called once per access group, before its first access.
    fn begin_group(&mut self, _group: &AccessGroup) {}

    fn on_hit(&mut self, expert: ExpertId, pos: usize);

    fn on_miss(&mut self, _expert: ExpertId, _pos: usize) {}

    fn choose_victim(&mut self, incoming: ExpertId, candidates: &[ExpertId], pos: usize) -> ExpertId;

    fn on_insert(&mut self, expert: ExpertId, pos: usize);
}

/// Index of the smallest `key` among `candidates`; first wins on ties.
pub(crate) fn argmin_by_key<K: Ord>(candidates: &[ExpertId], mut key: impl FnMut(ExpertId) -> K) -> ExpertId {
    let mut best = candidates[0];
    let mut best_key = key(best);
    for &c in &candidates[1..] {
        let k = key(c);
        if k < best_key {
            best = c;
            best_key = k;
        }
    }
    best
}

/// Resident set of one layer plus the policy that manages it.
pub struct ExpertCache {
    capacity: usize,
    resident: Vec<bool>,
    len: usize,
    policy: Box<dyn EvictionPolicy>,
    candidates: Vec<ExpertId>,
}

impl ExpertCache {
    pub fn new(num_experts: usize, capacity: usize, policy: Box<dyn EvictionPolicy>) -> Self {
        assert!(capacity >= 1, "cache capacity must be positive");
        Self { capacity, resident: vec![false; num_experts], len: 0, policy, candidates: Vec::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    pub fn contains(&self, expert: ExpertId) -> bool {
        self.resident[expert]
    }

    pub fn resident(&self) -> Vec<ExpertId> {
        (0..self.resident.len()).filter(|&e| self.resident[e]).collect()
    }

    pub fn policy(&self) -> &dyn EvictionPolicy {
        self.policy.as_ref()
    }

    pub fn begin_sequence(&mut self) {
        self.policy.begin_sequence();
    }

    pub fn begin_group(&mut self, group: &AccessGroup) {
        self.policy.begin_group(group);
    }

    /// Accesses `expert` at stream position `pos`. Experts in `pinned` are
    /// never chosen as victims.
    ///
    /// Panics if the cache is full and every resident expert is pinned; the
    /// simulator rules this out by requiring capacity >= top_k.
    pub fn access(&mut self, expert: ExpertId, pos: usize, pinned: &[ExpertId]) -> PolicyDecision {
        if self.resident[expert] {
            self.policy.on_hit(expert, pos);
            return PolicyDecision { evicted: None, loaded: expert, was_hit: true };
        }
        self.policy.on_miss(expert, pos);
        let mut evicted = None;
        if self.len == self.capacity {
            self.candidates.clear();
            self.candidates.extend((0..self.resident.len()).filter(|&e| self.resident[e] && !pinned.contains(&e)));
            assert!(!self.candidates.is_empty(), "no evictable expert: all {} residents pinned", self.len);
            let victim = self.policy.choose_victim(expert, &self.candidates, pos);
            assert!(
                self.candidates.contains(&victim),
                "policy {} chose non-candidate victim {victim}",
                self.policy.name()
            );
            self.resident[victim] = false;
            self.len -= 1;
            evicted = Some(victim);
        }
        self.resident[expert] = true;
        self.len += 1;
        self.policy.on_insert(expert, pos);
        PolicyDecision { evicted, loaded: expert, was_hit: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(policy: Box<dyn EvictionPolicy>, cap: usize, stream: &[usize]) -> Vec<PolicyDecision> {
        let mut c = ExpertCache::new(8, cap, policy);
        stream.iter().enumerate().map(|(pos, &e)| c.access(e, pos, &[])).collect()
    }

    const A: usize = 0;
    const B: usize = 1;
    const C: usize = 2;

    #[test]
    fn lru_textbook() {
        let d = run(Box::new(LruPolicy::new(8)), 2, &[A, B, A, C]);
        assert!(d[2].was_hit);
        assert_eq!(d[3].evicted, Some(B));
    }

    #[test]
    fn lfu_textbook_and_tie_break() {
        let d = run(Box::new(LfuPolicy::new(8)), 2, &[A, A, B, C]);
        assert_eq!(d[3].evicted, Some(B));
        // 5 and 3 both at frequency 1: the smaller id goes.
        let d = run(Box::new(LfuPolicy::new(8)), 2, &[5, 3, 7]);
        assert_eq!(d[2].evicted, Some(3));
    }

    #[test]
    fn fifo_ignores_hits() {
        let d = run(Box::new(FifoPolicy::new(8)), 2, &[A, B, A, C]);
        assert_eq!(d[3].evicted, Some(A));
    }

    #[test]
    fn pinned_experts_survive() {
        let mut c = ExpertCache::new(8, 2, Box::new(LruPolicy::new(8)));
        c.access(A, 0, &[]);
        c.access(B, 1, &[]);
        let d = c.access(C, 2, &[A]);
        assert_eq!(d.evicted, Some(B));
        assert!(c.contains(A) && c.contains(C) && !c.contains(B));
    }

    #[test]
    #[should_panic(expected = "no evictable expert")]
    fn all_pinned_panics() {
        let mut c = ExpertCache::new(8, 1, Box::new(LruPolicy::new(8)));
        c.access(A, 0, &[]);
        c.access(B, 1, &[A]);
    }

    #[test]
    fn decision_shape() {
        let d = run(Box::new(LruPolicy::new(8)), 1, &[A, A, B]);
        assert_eq!(d[0], PolicyDecision { evicted: None, loaded: A, was_hit: false });
        assert_eq!(d[1], PolicyDecision { evicted: None, loaded: A, was_hit: true });
        assert_eq!(d[2], PolicyDecision { evicted: Some(A), loaded: B, was_hit: false });
    }
}
