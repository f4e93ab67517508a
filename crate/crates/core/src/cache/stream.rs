//! Per-layer flattened access streams.
//!
//! Each layer sees an ordered list of access groups: one deduplicated group
//! per prompt (the prefill union, experts in first-appearance order), then one
//! group per decode step. Positions number the individual expert accesses of
//! a layer consecutively across groups and sequences.

use crate::trace::{ExpertId, Phase, RoutingTrace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessGroup {
    pub seq_id: u64,
    pub phase: Phase,
    /// Decode step index; `0` for a prefill group.
    pub step: u64,
    /// Position of the first access of this group in the layer stream.
    pub start: usize,
    /// Accessed experts, distinct, in access order.
    pub experts: Vec<ExpertId>,
    /// Per-token routed sets of a prefill group (empty for decode groups).
    pub prompt_tokens: Vec<Vec<ExpertId>>,
}

impl AccessGroup {
    /// Routed sets of the time steps this group covers: every prompt token
    /// for a prefill group, the single routed set for a decode group.
    pub fn routed_steps(&self) -> Box<dyn Iterator<Item = &[ExpertId]> + '_> {
        match self.phase {
            Phase::Prefill => Box::new(self.prompt_tokens.iter().map(Vec::as_slice)),
            Phase::Decode => Box::new(std::iter::once(self.experts.as_slice())),
        }
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.experts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerStream {
    pub layer: usize,
    pub num_experts: usize,
    pub groups: Vec<AccessGroup>,
}

impl LayerStream {
    /// Total number of expert accesses.
    pub fn len(&self) -> usize {
        self.groups.last().map_or(0, |g| g.start + g.experts.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Expert at every position, in order.
    pub fn accesses(&self) -> impl Iterator<Item = ExpertId> + '_ {
        self.groups.iter().flat_map(|g| g.experts.iter().copied())
    }
}

struct Builder {
    stream: LayerStream,
    next_pos: usize,
    prompt: Option<(u64, Vec<Vec<ExpertId>>)>,
}

impl Builder {
    fn push(
        &mut self,
        seq_id: u64,
        phase: Phase,
        step: u64,
        experts: Vec<ExpertId>,
        prompt_tokens: Vec<Vec<ExpertId>>,
    ) {
        let start = self.next_pos;
        self.next_pos += experts.len();
        self.stream.groups.push(AccessGroup { seq_id, phase, step, start, experts, prompt_tokens });
    }

    fn flush_prompt(&mut self) {
        if let Some((seq_id, tokens)) = self.prompt.take() {
            let mut seen = vec![false; self.stream.num_experts];
            let mut union = Vec::new();
            for &e in tokens.iter().flatten() {
                if !std::mem::replace(&mut seen[e], true) {
                    union.push(e);
                }
            }
            self.push(seq_id, Phase::Prefill, 0, union, tokens);
        }
    }
}

pub fn layer_streams(trace: &RoutingTrace) -> Vec<LayerStream> {
    let e = trace.num_experts();
    let mut builders: Vec<Builder> = (0..trace.num_layers())
        .map(|layer| Builder {
            stream: LayerStream { layer, num_experts: e, groups: Vec::new() },
            next_pos: 0,
            prompt: None,
        })
        .collect();
    for ev in trace.events() {
        let b = &mut builders[ev.layer];
        match ev.phase {
            Phase::Prefill => {
                if b.prompt.as_ref().is_some_and(|(s, _)| *s != ev.seq_id) {
                    b.flush_prompt();
                }
                b.prompt.get_or_insert_with(|| (ev.seq_id, Vec::new())).1.push(ev.experts.clone());
            }
            Phase::Decode => {
                b.flush_prompt();
                b.push(ev.seq_id, Phase::Decode, ev.step, ev.experts.clone(), Vec::new());
            }
        }
    }
    builders
        .into_iter()
        .map(|mut b| {
            b.flush_prompt();
            b.stream
        })
        .collect()
}
