use std::collections::BTreeMap;

use super::{ExpertId, Phase, RoutingTrace, TraceError};

/// Mean fraction of a layer's experts touched by the first `n` prompt tokens,
/// averaged over sequences and layers, for each `n` in `token_counts`.
pub fn prefill_coverage(trace: &RoutingTrace, token_counts: &[usize]) -> Result<Vec<(usize, f64)>, TraceError> {
    if token_counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(TraceError::InvalidArgument("token_counts must be ascending".into()));
    }
    let Some(&need) = token_counts.last() else {
        return Ok(Vec::new());
    };
    let e = trace.num_experts();
    let l = trace.num_layers();

    // (seq, layer) -> per-token expert sets in step order
    let mut prompts: BTreeMap<u64, Vec<Vec<&[ExpertId]>>> = BTreeMap::new();
    for seq in trace.seq_ids() {
        prompts.insert(seq, vec![Vec::new(); l]);
    }
    for ev in trace.events().iter().filter(|ev| ev.phase == Phase::Prefill) {
        prompts.get_mut(&ev.seq_id).expect("seq registered")[ev.layer].push(&ev.experts);
    }

    for (&seq_id, layers) in &prompts {
        let have = layers.iter().map(Vec::len).min().unwrap_or(0);
        if have < need {
            return Err(TraceError::InsufficientTokens { seq_id, have, need });
        }
    }

    let denom = (prompts.len() * l) as f64;
    let mut out = Vec::with_capacity(token_counts.len());
    for &n in token_counts {
        let mut total = 0.0;
        for layers in prompts.values() {
            for tokens in layers {
                let mut seen = vec![false; e];
                for experts in &tokens[..n] {
                    for &x in *experts {
                        seen[x] = true;
                    }
                }
                total += seen.iter().filter(|&&s| s).count() as f64 / e as f64;
            }
        }
        out.push((n, if denom > 0.0 { total / denom } else { 0.0 }));
    }
    Ok(out)
}
