use serde::{Deserialize, Serialize};

/// Memory figures for the per-layer cache size estimate.
///
/// `all_experts_bytes` is the storage of every expert of every layer and
/// `experts_per_layer` the number of experts in one layer. With `H` bytes of
/// headroom the estimate is `H * experts_per_layer / all_experts_bytes`:
/// `all_experts_bytes / experts_per_layer` is the cost of keeping one expert
/// slot in every layer, so the result is the number of slots per layer that
/// fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareBudget {
    pub vram_bytes: u64,
    pub nonexpert_bytes: u64,
    pub all_experts_bytes: u64,
    pub experts_per_layer: usize,
}

/// Cache capacity per layer, clamped to `[0, experts_per_layer]`.
pub fn cache_size_calc(budget: &HardwareBudget) -> usize {
    let headroom = budget.vram_bytes.saturating_sub(budget.nonexpert_bytes) as u128;
    let per_layer = budget.experts_per_layer as u128;
    if headroom == 0 || per_layer == 0 {
        return 0;
    }
    if budget.all_experts_bytes == 0 {
        return budget.experts_per_layer;
    }
    let n = headroom * per_layer / budget.all_experts_bytes as u128;
    n.min(per_layer) as usize
}
