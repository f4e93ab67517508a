mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{naive_replay, random_trace, simulated_decisions, Naive};
use expertsim::sim::{CostModel, PolicyConfig, SimOptions, Simulator};

#[test]
fn lru_and_lfu_match_naive_references() {
    let (bad, evictions) = common::brute_force_mismatches(200, 10_000);
    assert_eq!(bad, 0);
    assert!(evictions > 1000, "only {evictions} evictions compared");
}

#[test]
fn naive_reference_on_multi_layer_traces() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, 3, 8, 2, 150);
        for c in [2, 5, 8] {
            let lru = simulated_decisions(&trace, PolicyConfig::Lru, c);
            let lfu = simulated_decisions(&trace, PolicyConfig::Lfu, c);
            for l in 0..3 {
                assert_eq!(lru[l], naive_replay(&trace, l, c, Naive::Lru), "seed {seed} layer {l} C={c}");
                assert_eq!(lfu[l], naive_replay(&trace, l, c, Naive::Lfu), "seed {seed} layer {l} C={c}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn belady_dominates_on_random_traces(seed in 0u64..1_000_000, experts in 2usize..12, k in 1usize..4, c_extra in 0usize..8) {
        let k = k.min(experts);
        let c = (k + c_extra).min(experts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, 2, experts, k, 120);
        let sim = Simulator::new(&trace, SimOptions { include_prefill_in_hit_rate: true, ..Default::default() })
            .with_nets(common::random_nets(2, experts, seed))
            .unwrap();
        let cost = CostModel::default();
        let opt = sim.simulate(&PolicyConfig::Belady, c, &cost).unwrap();
        for p in common::challengers() {
            let r = sim.simulate(&p, c, &cost).unwrap();
            prop_assert!(r.misses >= opt.misses, "{} misses {} < belady {}", p, r.misses, opt.misses);
        }
    }

    #[test]
    fn hits_plus_misses_equals_accesses(seed in 0u64..1_000_000, c in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trace = random_trace(&mut rng, 1, 8, 2, 100);
        let sim = Simulator::new(&trace, SimOptions::default());
        let n: usize = sim.streams().iter().map(|s| s.len()).sum();
        for p in ["lru", "lfu", "fifo", "arc", "lecar", "belady"] {
            let r = sim.simulate(&p.parse().unwrap(), c, &CostModel::default()).unwrap();
            prop_assert_eq!((r.decode_hits + r.decode_misses + r.prefill_hits + r.prefill_misses) as usize, n);
            prop_assert!(r.evictions <= r.decode_misses + r.prefill_misses);
        }
    }
}
