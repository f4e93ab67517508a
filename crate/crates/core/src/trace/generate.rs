//! Synthetic routing workloads: per-layer Zipf popularity mixed with a
//! short-term "hot set" of recently routed experts.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AccessEvent, ExpertId, Phase, RoutingTrace, TraceError, TraceHeader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticWorkloadConfig {
    pub num_seqs: usize,
    pub decode_steps: usize,
    pub prefill_tokens: usize,
    /// Zipf exponent of the per-layer expert popularity.
    pub zipf_s: f64,
    /// Probability that a draw comes from the experts routed within the last `w_hot` steps.
    pub recency_boost: f64,
    pub w_hot: usize,
    pub rng_seed: u64,
    /// Seeds the per-layer popularity permutations separately from
    /// `rng_seed`, so traces with different `rng_seed` share one "model".
    /// When absent the permutations are drawn from `rng_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub popularity_seed: Option<u64>,
}

impl Default for SyntheticWorkloadConfig {
    fn default() -> Self {
        Self {
            num_seqs: 4,
            decode_steps: 256,
            prefill_tokens: 32,
            zipf_s: 1.0,
            recency_boost: 0.3,
            w_hot: 4,
            rng_seed: 0,
            popularity_seed: None,
        }
    }
}

impl SyntheticWorkloadConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |field, reason: &str| Err(TraceError::InvalidConfig { field, reason: reason.to_string() });
        if self.num_seqs == 0 {
            return bad("num_seqs", "must be >= 1");
        }
        if self.decode_steps == 0 && self.prefill_tokens == 0 {
            return bad("decode_steps", "decode_steps and prefill_tokens cannot both be zero");
        }
        if self.w_hot == 0 {
            return bad("w_hot", "must be >= 1");
        }
        if !(self.zipf_s.is_finite() && self.zipf_s >= 0.0) {
            return bad("zipf_s", "must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.recency_boost) {
            return bad("recency_boost", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Unnormalized Zipf weight of each popularity rank (rank 0 is the most popular).
pub fn zipf_mass(num_experts: usize, s: f64) -> Vec<f64> {
    (0..num_experts).map(|r| ((r + 1) as f64).powf(-s)).collect()
}

/// Per-layer rank-to-expert permutation that [`generate_trace`] uses for
/// this seed (the `popularity_seed` if set, otherwise the `rng_seed`).
pub fn popularity_ranks(header: &TraceHeader, rng_seed: u64) -> Vec<Vec<ExpertId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    permutations(header, &mut rng)
}

fn permutations(header: &TraceHeader, rng: &mut ChaCha8Rng) -> Vec<Vec<ExpertId>> {
    (0..header.num_layers)
        .map(|_| {
            let mut p: Vec<ExpertId> = (0..header.num_experts).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

struct LayerSampler {
    /// Popularity weight indexed by expert id.
    weight: Vec<f64>,
    history: VecDeque<Vec<ExpertId>>,
}

impl LayerSampler {
    fn draw(&mut self, k: usize, boost: f64, w_hot: usize, rng: &mut ChaCha8Rng) -> Vec<ExpertId> {
        let e = self.weight.len();
        let mut hot = vec![false; e];
        for step in &self.history {
            for &x in step {
                hot[x] = true;
            }
        }
        let mut taken = vec![false; e];
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let hot_pool: Vec<ExpertId> = (0..e).filter(|&x| hot[x] && !taken[x]).collect();
            let pick = if !hot_pool.is_empty() && rng.random::<f64>() < boost {
                hot_pool[rng.random_range(0..hot_pool.len())]
            } else {
                let total: f64 = (0..e).filter(|&x| !taken[x]).map(|x| self.weight[x]).sum();
                let mut u = rng.random::<f64>() * total;
                let mut chosen = None;
                for x in (0..e).filter(|&x| !taken[x]) {
                    chosen = Some(x);
                    u -= self.weight[x];
                    if u < 0.0 {
                        break;
                    }
                }
                chosen.expect("k <= num_experts leaves a free expert")
            };
            taken[pick] = true;
            out.push(pick);
        }
        self.history.push_back(out.clone());
        if self.history.len() > w_hot {
            self.history.pop_front();
        }
        out
    }
}

pub fn generate_trace(header: &TraceHeader, cfg: &SyntheticWorkloadConfig) -> Result<RoutingTrace, TraceError> {
    header.validate()?;
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let perms = match cfg.popularity_seed {
        Some(s) => popularity_ranks(header, s),
        None => permutations(header, &mut rng),
    };
    let mass = zipf_mass(header.num_experts, cfg.zipf_s);
    let weights: Vec<Vec<f64>> = perms
        .iter()
        .map(|perm| {
            let mut w = vec![0.0; header.num_experts];
            for (rank, &expert) in perm.iter().enumerate() {
                w[expert] = mass[rank];
            }
            w
        })
        .collect();

    let tokens_per_seq = cfg.prefill_tokens + cfg.decode_steps;
    let mut events = Vec::with_capacity(cfg.num_seqs * tokens_per_seq * header.num_layers);
    for seq in 0..cfg.num_seqs {
        let mut samplers: Vec<LayerSampler> =
            weights.iter().map(|w| LayerSampler { weight: w.clone(), history: VecDeque::new() }).collect();
        for t in 0..tokens_per_seq {
            let (phase, step) =
                if t < cfg.prefill_tokens { (Phase::Prefill, t) } else { (Phase::Decode, t - cfg.prefill_tokens) };
            for (layer, sampler) in samplers.iter_mut().enumerate() {
                let experts = sampler.draw(header.top_k, cfg.recency_boost, cfg.w_hot, &mut rng);
                events.push(AccessEvent { seq_id: seq as u64, phase, step: step as u64, layer, experts });
            }
        }
    }
    RoutingTrace::new(header.clone(), events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(num_seqs: usize, decode_steps: usize, prefill_tokens: usize) -> SyntheticWorkloadConfig {
        SyntheticWorkloadConfig { num_seqs, decode_steps, prefill_tokens, rng_seed: 9, ..Default::default() }
    }

    #[test]
    fn single_prefill_token_is_one_event_of_k() {
        let t = generate_trace(&TraceHeader::new("s", 1, 8, 2), &cfg(1, 0, 1)).unwrap();
        assert_eq!(t.events().len(), 1);
        assert_eq!(t.events()[0].phase, Phase::Prefill);
        assert_eq!(t.events()[0].experts.len(), 2);
    }

    #[test]
    fn three_decode_steps_two_layers_is_six_events() {
        let t = generate_trace(&TraceHeader::new("s", 2, 8, 2), &cfg(1, 3, 0)).unwrap();
        assert_eq!(t.events().len(), 6);
        assert!(t.events().iter().all(|e| e.phase == Phase::Decode && e.experts.len() == 2));
    }

    #[test]
    fn rejects_bad_configs() {
        let h = TraceHeader::new("s", 1, 4, 5);
        assert!(matches!(generate_trace(&h, &cfg(1, 1, 0)), Err(TraceError::InvalidHeader(m)) if m.contains("top_k")));
        let h = TraceHeader::new("s", 1, 8, 2);
        assert!(matches!(generate_trace(&h, &cfg(0, 1, 0)), Err(TraceError::InvalidConfig { field: "num_seqs", .. })));
        let mut c = cfg(1, 1, 0);
        c.w_hot = 0;
        assert!(matches!(generate_trace(&h, &c), Err(TraceError::InvalidConfig { field: "w_hot", .. })));
        let mut c = cfg(1, 1, 0);
        c.recency_boost = 1.5;
        assert!(generate_trace(&h, &c).is_err());
    }

    #[test]
    fn full_recency_boost_still_valid() {
        let mut c = cfg(2, 50, 4);
        c.recency_boost = 1.0;
        let t = generate_trace(&TraceHeader::new("s", 2, 8, 8), &c).unwrap();
        assert_eq!(t.decode_tokens(), 100);
    }

    #[test]
    fn ranks_are_permutations_and_differ_across_layers() {
        let h = TraceHeader::new("s", 3, 64, 8);
        let ranks = popularity_ranks(&h, 5);
        for r in &ranks {
            let mut s = r.clone();
            s.sort_unstable();
            assert_eq!(s, (0..64).collect::<Vec<_>>());
        }
        assert_ne!(ranks[0], ranks[1]);
    }

    #[test]
    fn popularity_seed_is_shared_across_rng_seeds() {
        let h = TraceHeader::new("s", 1, 16, 2);
        let counts = |rng_seed| {
            let cfg = SyntheticWorkloadConfig {
                rng_seed,
                popularity_seed: Some(3),
                recency_boost: 0.0,
                zipf_s: 2.0,
                ..cfg(1, 400, 0)
            };
            let mut c = vec![0usize; 16];
            for ev in generate_trace(&h, &cfg).unwrap().events() {
                for &x in &ev.experts {
                    c[x] += 1;
                }
            }
            c
        };
        let (a, b) = (counts(1), counts(2));
        assert_ne!(a, b);
        let top = |c: &[usize]| (0..16).max_by_key(|&x| c[x]).unwrap();
        assert_eq!(top(&a), popularity_ranks(&h, 3)[0][0]);
        assert_eq!(top(&b), popularity_ranks(&h, 3)[0][0]);
    }
}
