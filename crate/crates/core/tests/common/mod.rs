//! Shared helpers for the integration tests: random traces, naive reference
//! caches and the checks the acceptance suite reuses.
#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use expertsim::ml::{EvictionNet, NetSet};
use expertsim::sim::{CostModel, PolicyConfig, Record, SimOptions, Simulator, TimelineKind, TimelineRow};
use expertsim::trace::{
    generate_trace, AccessEvent, ExpertId, Phase, RoutingTrace, SyntheticWorkloadConfig, TraceHeader,
};

/// Random trace with uniformly drawn routings. `max_accesses` bounds the
/// access count of layer 0, prefill unions included.
pub fn random_trace(
    rng: &mut ChaCha8Rng,
    layers: usize,
    experts: usize,
    top_k: usize,
    max_accesses: usize,
) -> RoutingTrace {
    let header = TraceHeader::new("random", layers, experts, top_k);
    let mut events = Vec::new();
    let mut budget = max_accesses;
    let mut seq = 0u64;
    while budget >= top_k {
        let prompt_len = rng.random_range(0..4usize);
        let mut union = vec![false; experts];
        for step in 0..prompt_len as u64 {
            for layer in 0..layers {
                let k = rng.random_range(1..=top_k);
                let picked = sample(rng, experts, k).into_vec();
                events.push(AccessEvent { seq_id: seq, phase: Phase::Prefill, step, layer, experts: picked.clone() });
                if layer == 0 {
                    picked.iter().for_each(|&e| union[e] = true);
                }
            }
        }
        let union_len = union.iter().filter(|&&u| u).count();
        if union_len > budget {
            events.retain(|e| e.seq_id != seq);
            break;
        }
        budget -= union_len;
        let steps = rng.random_range(1..=12usize).min(budget / top_k);
        for step in 0..steps as u64 {
            for layer in 0..layers {
                let picked = sample(rng, experts, top_k).into_vec();
                events.push(AccessEvent { seq_id: seq, phase: Phase::Decode, step, layer, experts: picked });
            }
        }
        budget -= steps * top_k;
        seq += 1;
        if steps == 0 {
            break;
        }
    }
    RoutingTrace::new(header, events).expect("valid random trace")
}

/// One access as seen by a cache: what was accessed, whether it hit and
/// what it displaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub expert: ExpertId,
    pub hit: bool,
    pub evicted: Option<ExpertId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Naive {
    Lru,
    Lfu,
}

/// Straightforward reimplementation of the replay for one layer: prompt
/// tokens collapse to their first-occurrence union (unpinned), decode tokens
/// pin their routed set, residency persists across sequences and LFU counts
/// restart with each sequence. Ties go to the smallest expert id.
pub fn naive_replay(trace: &RoutingTrace, layer: usize, capacity: usize, policy: Naive) -> Vec<Decision> {
    let mut groups: Vec<(u64, Vec<ExpertId>, bool)> = Vec::new();
    let mut prompt: Option<(u64, Vec<ExpertId>)> = None;
    for ev in trace.events().iter().filter(|e| e.layer == layer) {
        if ev.phase == Phase::Prefill {
            let p = prompt.get_or_insert_with(|| (ev.seq_id, Vec::new()));
            for &e in &ev.experts {
                if !p.1.contains(&e) {
                    p.1.push(e);
                }
            }
        } else {
            if let Some((s, u)) = prompt.take() {
                groups.push((s, u, false));
            }
            groups.push((ev.seq_id, ev.experts.clone(), true));
        }
    }
    if let Some((s, u)) = prompt.take() {
        groups.push((s, u, false));
    }

    let mut resident: Vec<ExpertId> = Vec::new();
    let mut last_use: HashMap<ExpertId, usize> = HashMap::new();
    let mut count: HashMap<ExpertId, u64> = HashMap::new();
    let mut current_seq = None;
    let mut clock = 0usize;
    let mut out = Vec::new();
    for (seq, experts, pin) in groups {
        if current_seq != Some(seq) {
            count.clear();
            current_seq = Some(seq);
        }
        for &x in &experts {
            clock += 1;
            *count.entry(x).or_default() += 1;
            if resident.contains(&x) {
                last_use.insert(x, clock);
                out.push(Decision { expert: x, hit: true, evicted: None });
                continue;
            }
            let mut evicted = None;
            if resident.len() == capacity {
                let victim = resident
                    .iter()
                    .copied()
                    .filter(|e| !(pin && experts.contains(e)))
                    .min_by_key(|&e| match policy {
                        Naive::Lru => (last_use[&e] as u64, e),
                        Naive::Lfu => (count.get(&e).copied().unwrap_or(0), e),
                    })
                    .expect("an evictable expert");
                resident.retain(|&e| e != victim);
                evicted = Some(victim);
            }
            resident.push(x);
            last_use.insert(x, clock);
            out.push(Decision { expert: x, hit: false, evicted });
        }
    }
    out
}

/// Folds a simulator timeline for one layer back into per-access decisions.
pub fn timeline_decisions(rows: &[TimelineRow], layer: usize) -> Vec<Decision> {
    let mut out: Vec<Decision> = Vec::new();
    for r in rows.iter().filter(|r| r.layer == layer) {
        match r.kind {
            TimelineKind::Hit => out.push(Decision { expert: r.expert, hit: true, evicted: None }),
            TimelineKind::Miss => out.push(Decision { expert: r.expert, hit: false, evicted: None }),
            TimelineKind::Evict => out.last_mut().expect("evict follows a miss").evicted = Some(r.expert),
        }
    }
    out
}

pub fn simulated_decisions(trace: &RoutingTrace, policy: PolicyConfig, capacity: usize) -> Vec<Vec<Decision>> {
    let sim = Simulator::new(trace, SimOptions::default());
    let run = sim
        .run(&policy, capacity, &CostModel::default(), Record { evictions: false, timeline: true })
        .expect("simulation runs");
    (0..trace.num_layers()).map(|l| timeline_decisions(&run.timeline, l)).collect()
}

/// Runs the brute-force comparison on `n` random traces. Returns the number
/// of mismatching (trace, policy) pairs and the evictions compared.
pub fn brute_force_mismatches(n: u64, seed: u64) -> (usize, usize) {
    let mut bad = 0;
    let mut evictions = 0;
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + i);
        let experts = rng.random_range(2..=10usize);
        let top_k = rng.random_range(1..=experts.min(4));
        let max_accesses = rng.random_range(top_k..=200);
        let trace = random_trace(&mut rng, 1, experts, top_k, max_accesses);
        let capacity = rng.random_range(top_k..=experts);
        for (cfg, naive) in [(PolicyConfig::Lru, Naive::Lru), (PolicyConfig::Lfu, Naive::Lfu)] {
            let got = &simulated_decisions(&trace, cfg, capacity)[0];
            let want = naive_replay(&trace, 0, capacity, naive);
            evictions += want.iter().filter(|d| d.evicted.is_some()).count();
            if *got != want {
                eprintln!("mismatch: trace {i}, {cfg}, E={experts} K={top_k} C={capacity}");
                bad += 1;
            }
        }
    }
    (bad, evictions)
}

/// One synthetic trace from the dominance suite.
pub struct SuiteCase {
    pub trace: RoutingTrace,
    pub capacities: Vec<usize>,
    pub label: String,
}

/// Synthetic traces over L in {1,2,4}, E in {8,64}, K in {2,8} with three
/// seeds each, at capacities of 25/50/75% of E. Capacities below K cannot
/// hold a decode step and are skipped, which drops E=8, K=8 entirely.
pub fn dominance_suite() -> Vec<SuiteCase> {
    let mut cases = Vec::new();
    for layers in [1usize, 2, 4] {
        for experts in [8usize, 64] {
            for top_k in [2usize, 8] {
                let capacities: Vec<usize> = (1..=3).map(|q| experts * q / 4).filter(|&c| c >= top_k).collect();
                if capacities.is_empty() {
                    continue;
                }
                for seed in 0..3u64 {
                    let header = TraceHeader::new("suite", layers, experts, top_k);
                    let wl = SyntheticWorkloadConfig {
                        num_seqs: 3,
                        decode_steps: 96,
                        prefill_tokens: 16,
                        rng_seed: 100 * layers as u64 + 10 * experts as u64 + top_k as u64 * 1000 + seed,
                        ..Default::default()
                    };
                    cases.push(SuiteCase {
                        trace: generate_trace(&header, &wl).expect("valid suite config"),
                        capacities: capacities.clone(),
                        label: format!("L={layers} E={experts} K={top_k} seed={seed}"),
                    });
                }
            }
        }
    }
    cases
}

/// Untrained networks, one per layer: an arbitrary but valid ML policy.
pub fn random_nets(layers: usize, experts: usize, seed: u64) -> NetSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetSet::per_layer((0..layers).map(|_| EvictionNet::init(experts, 16, &mut rng)).collect())
}

pub fn challengers() -> Vec<PolicyConfig> {
    ["lru", "lfu", "fifo", "arc", "lecar", "ml"].iter().map(|p| p.parse().unwrap()).collect()
}

/// Dominance and refetch-ordering violations over the suite.
pub struct SuiteOutcome {
    pub traces: usize,
    pub comparisons: usize,
    pub dominance_violations: Vec<String>,
    pub refetch_violations: Vec<String>,
}

pub fn run_dominance_suite() -> SuiteOutcome {
    let cases = dominance_suite();
    let cost = CostModel::default();
    let mut out =
        SuiteOutcome { traces: cases.len(), comparisons: 0, dominance_violations: vec![], refetch_violations: vec![] };
    for case in &cases {
        let t = &case.trace;
        let sim = Simulator::new(t, SimOptions::default())
            .with_nets(random_nets(t.num_layers(), t.num_experts(), 9))
            .expect("nets fit");
        for &c in &case.capacities {
            let opt = sim.simulate(&PolicyConfig::Belady, c, &cost).unwrap();
            for p in challengers() {
                let r = sim.simulate(&p, c, &cost).unwrap();
                out.comparisons += 1;
                if r.hit_rate > opt.hit_rate {
                    out.dominance_violations
                        .push(format!("{} C={c}: {} {:.4} > belady {:.4}", case.label, p, r.hit_rate, opt.hit_rate));
                }
                if p == PolicyConfig::Lru && opt.refetch_within_w > r.refetch_within_w {
                    out.refetch_violations.push(format!(
                        "{} C={c}: belady {:.4} > lru {:.4}",
                        case.label, opt.refetch_within_w, r.refetch_within_w
                    ));
                }
            }
        }
    }
    out
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// Forward pass written with plain loops over the parameter arrays.
pub fn naive_forward(net: &EvictionNet, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (i, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.bias.len()];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut s = layer.bias[o];
            for (j, aj) in a.iter().enumerate() {
                s += layer.weight[[o, j]] * aj;
            }
            *zo = if i < 2 { silu(s) } else { s };
        }
        a = z;
    }
    a
}

/// Largest relative error between analytic and central-difference gradients
/// over `nets` random nets with E=4. Entry error is
/// |g - n| / max(|g| + |n|, 1e-8).
pub fn gradient_check(nets: usize, seed: u64, h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..nets {
        let e = 4;
        let hidden = rng.random_range(3..=12);
        let rows = rng.random_range(1..=6);
        let mut net = EvictionNet::init(e, hidden, &mut rng);
        let x = Array2::from_shape_fn((rows, 2 * e), |_| rng.random_range(0.0..1.0));
        let y = Array2::from_shape_fn((rows, e), |_| rng.random_range(0.0..1.0));
        let mut m = Array2::from_shape_fn((rows, e), |_| if rng.random_bool(0.6) { 1.0 } else { 0.0 });
        m[[0, 0]] = 1.0;
        let (_, grads) = net.loss_and_gradients(&x.view(), &y.view(), &m.view()).unwrap();
        let analytic: Vec<f64> = grads.slices().concat();
        let mut k = 0;
        for s in 0..6 {
            for i in 0..net.param_slices()[s].len() {
                let orig = net.param_slices()[s][i];
                net.param_slices_mut()[s][i] = orig + h;
                let up = net.masked_mse(&x.view(), &y.view(), &m.view()).unwrap();
                net.param_slices_mut()[s][i] = orig - h;
                let down = net.masked_mse(&x.view(), &y.view(), &m.view()).unwrap();
                net.param_slices_mut()[s][i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let g = analytic[k];
                worst = worst.max((g - numeric).abs() / (g.abs() + numeric.abs()).max(1e-8));
                k += 1;
            }
        }
        assert_eq!(k, analytic.len());
    }
    worst
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
