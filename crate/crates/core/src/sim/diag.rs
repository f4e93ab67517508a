//! Diagnostics over eviction logs: how soon victims come back, and which of
//! two policies picks victims that are needed later.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::engine::EvictionRecord;
use crate::cache::{distance_key, LayerOracle, LayerStream};

/// Fraction of evictions whose victim is accessed again in the same layer
/// within the next `window` access groups. Zero when nothing was evicted.
pub fn refetch_rate(log: &[EvictionRecord], streams: &[LayerStream], window: usize) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    let refetched = log
        .iter()
        .filter(|r| {
            let groups = &streams[r.layer].groups;
            groups.iter().skip(r.group + 1).take(window).any(|g| g.experts.contains(&r.victim))
        })
        .count();
    refetched as f64 / log.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuelOutcome {
    pub a_better: u64,
    pub b_better: u64,
    pub ties: u64,
    /// `a_better / (a_better + b_better)`, or 0.5 with no strict winner.
    pub fraction_a_better: f64,
}

/// Compares two independent replays of the same streams. At every position
/// where both evict, the policy whose own victim is next needed later made
/// the better choice. Equal distances (including two never-again victims)
/// count as ties and are left out of the fraction.
pub fn eviction_quality_duel(a: &[EvictionRecord], b: &[EvictionRecord], oracles: &[Arc<LayerOracle>]) -> DuelOutcome {
    let (mut i, mut j) = (0, 0);
    let (mut a_better, mut b_better, mut ties) = (0u64, 0u64, 0u64);
    while i < a.len() && j < b.len() {
        let (ka, kb) = ((a[i].layer, a[i].pos), (b[j].layer, b[j].pos));
        if ka < kb {
            i += 1;
        } else if kb < ka {
            j += 1;
        } else {
            let o = &oracles[a[i].layer];
            let da = distance_key(o.next_use_distance(a[i].victim, a[i].pos));
            let db = distance_key(o.next_use_distance(b[j].victim, b[j].pos));
            match da.cmp(&db) {
                std::cmp::Ordering::Greater => a_better += 1,
                std::cmp::Ordering::Less => b_better += 1,
                std::cmp::Ordering::Equal => ties += 1,
            }
            i += 1;
            j += 1;
        }
    }
    let decided = a_better + b_better;
    let fraction_a_better = if decided == 0 { 0.5 } else { a_better as f64 / decided as f64 };
    DuelOutcome { a_better, b_better, ties, fraction_a_better }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pos: usize, victim: usize) -> EvictionRecord {
        EvictionRecord { layer: 0, pos, group: pos, victim }
    }

    #[test]
    fn duel_counts_strict_wins_only() {
        // expert 0 used at 10, expert 1 at 20, expert 2 never again
        let o = vec![Arc::new(LayerOracle::from_positions(vec![vec![10], vec![20], vec![]]))];
        let a = [rec(1, 1), rec(2, 2), rec(3, 0), rec(5, 0)];
        let b = [rec(1, 0), rec(2, 2), rec(3, 1)];
        let d = eviction_quality_duel(&a, &b, &o);
        assert_eq!((d.a_better, d.b_better, d.ties), (1, 1, 1));
        assert_eq!(d.fraction_a_better, 0.5);
        let d = eviction_quality_duel(&a[..1], &b[..1], &o);
        assert_eq!(d.fraction_a_better, 1.0);
    }

    #[test]
    fn self_duel_is_one_half() {
        let o = vec![Arc::new(LayerOracle::from_positions(vec![vec![10], vec![20]]))];
        let a = [rec(1, 1), rec(3, 0)];
        let d = eviction_quality_duel(&a, &a, &o);
        assert_eq!(d.fraction_a_better, 0.5);
        assert_eq!(d.ties, 2);
    }
}
