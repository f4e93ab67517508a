use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cost::CostModel;
use super::policy::{build_policy, PolicyConfig, PolicyInputs};
use super::SimError;
use crate::cache::{layer_streams, ExpertCache, LayerOracle, LayerStream};
use crate::ml::{MlError, NetSet};
use crate::trace::{ExpertId, Phase, RoutingTrace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    /// Count prompt accesses in the headline hits/misses. Decode-only by default.
    pub include_prefill_in_hit_rate: bool,
    /// Refetch window, in access groups of the same layer.
    pub refetch_window: usize,
    /// Whether the learned policy's features advance on prompt tokens.
    pub include_prefill_features: bool,
    /// Seeds the randomized policies (LeCaR draws from stream `layer`).
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { include_prefill_in_hit_rate: false, refetch_window: 5, include_prefill_features: true, seed: 0 }
    }
}

/// One row of a sweep: the outcome of replaying a trace under one policy at
/// one capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimReport {
    pub policy: String,
    pub capacity: usize,
    /// Headline counts (decode only unless prompt accesses are included).
    pub hits: u64,
    pub misses: u64,
    pub hit_rate: f64,
    /// Misses on an expert's first access in its layer.
    pub compulsory_misses: u64,
    /// Hit rate with compulsory misses left out.
    pub warm_hit_rate: f64,
    pub io_count: u64,
    pub decode_hits: u64,
    pub decode_misses: u64,
    pub prefill_hits: u64,
    pub prefill_misses: u64,
    pub evictions: u64,
    pub refetches: u64,
    pub refetch_window: usize,
    pub refetch_within_w: f64,
    pub decode_tokens: u64,
    pub est_decode_latency_ns: u64,
    pub prefill_latency_ns: u64,
    pub tokens_per_second_est: f64,
}

impl SimReport {
    pub fn est_decode_latency(&self) -> Duration {
        Duration::from_nanos(self.est_decode_latency_ns)
    }

    pub fn prefill_latency(&self) -> Duration {
        Duration::from_nanos(self.prefill_latency_ns)
    }
}

/// An eviction, located by layer, stream position and access-group index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionRecord {
    pub layer: usize,
    pub pos: usize,
    pub group: usize,
    pub victim: ExpertId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimelineKind {
    Hit,
    Miss,
    Evict,
}

impl TimelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Hit => "hit",
            Self::Miss => "miss",
            Self::Evict => "evict",
        }
    }
}

/// One cell of the per-layer access/eviction heatmap. `step` is the
/// access-group index within the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineRow {
    pub layer: usize,
    pub step: usize,
    pub seq_id: u64,
    pub phase: Phase,
    pub expert: ExpertId,
    pub kind: TimelineKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Record {
    pub evictions: bool,
    pub timeline: bool,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub report: SimReport,
    pub evictions: Vec<EvictionRecord>,
    pub timeline: Vec<TimelineRow>,
}

#[derive(Default)]
struct LayerTally {
    decode_hits: u64,
    decode_misses: u64,
    prefill_hits: u64,
    prefill_misses: u64,
    compulsory: u64,
    evictions: u64,
    refetches: u64,
    decode_latency: Duration,
    prefill_latency: Duration,
}

/// Trace-derived state shared by every (policy, capacity) replay.
pub struct Simulator<'a> {
    trace: &'a RoutingTrace,
    streams: Vec<LayerStream>,
    oracles: Vec<Arc<LayerOracle>>,
    nets: Option<NetSet>,
    opts: SimOptions,
}

impl<'a> Simulator<'a> {
    pub fn new(trace: &'a RoutingTrace, opts: SimOptions) -> Self {
        let streams = layer_streams(trace);
        let oracles = streams.iter().map(|s| Arc::new(LayerOracle::build(s))).collect();
        Self { trace, streams, oracles, nets: None, opts }
    }

    /// Attaches the learned policy's networks, checking them against the trace.
    pub fn with_nets(mut self, nets: NetSet) -> Result<Self, SimError> {
        let e = self.trace.num_experts();
        if nets.num_layers() != self.trace.num_layers() {
            return Err(SimError::LayerMismatch { expected: self.trace.num_layers(), found: nets.num_layers() });
        }
        for l in 0..nets.num_layers() {
            let found = nets.layer(l).num_experts();
            if found != e {
                return Err(MlError::ShapeMismatch { expected: e, found }.into());
            }
        }
        self.nets = Some(nets);
        Ok(self)
    }

    pub fn trace(&self) -> &RoutingTrace {
        self.trace
    }

    pub fn streams(&self) -> &[LayerStream] {
        &self.streams
    }

    pub fn oracles(&self) -> &[Arc<LayerOracle>] {
        &self.oracles
    }

    pub fn options(&self) -> &SimOptions {
        &self.opts
    }

    pub fn check_capacity(&self, capacity: usize) -> Result<(), SimError> {
        if capacity < self.trace.top_k() {
            return Err(SimError::CapacityTooSmall { capacity, top_k: self.trace.top_k() });
        }
        Ok(())
    }

    pub fn simulate(&self, policy: &PolicyConfig, capacity: usize, cost: &CostModel) -> Result<SimReport, SimError> {
        Ok(self.run(policy, capacity, cost, Record::default())?.report)
    }

    pub fn run(
        &self,
        policy: &PolicyConfig,
        capacity: usize,
        cost: &CostModel,
        record: Record,
    ) -> Result<SimRun, SimError> {
        self.check_capacity(capacity)?;
        cost.validate()?;
        policy.validate()?;
        let mut total = LayerTally::default();
        let mut evictions = Vec::new();
        let mut timeline = Vec::new();
        for (layer, stream) in self.streams.iter().enumerate() {
            let inputs = PolicyInputs {
                layer,
                num_experts: stream.num_experts,
                capacity,
                oracle: &self.oracles[layer],
                nets: self.nets.as_ref(),
                seed: self.opts.seed,
                include_prefill_features: self.opts.include_prefill_features,
            };
            let cache = ExpertCache::new(stream.num_experts, capacity, build_policy(policy, &inputs)?);
            let charge_scoring = matches!(policy, PolicyConfig::Ml);
            let t = self.replay_layer(stream, cache, cost, charge_scoring, record, &mut evictions, &mut timeline);
            total.decode_hits += t.decode_hits;
            total.decode_misses += t.decode_misses;
            total.prefill_hits += t.prefill_hits;
            total.prefill_misses += t.prefill_misses;
            total.compulsory += t.compulsory;
            total.evictions += t.evictions;
            total.refetches += t.refetches;
            total.decode_latency += t.decode_latency;
            total.prefill_latency += t.prefill_latency;
        }
        Ok(SimRun { report: self.finish(policy, capacity, total), evictions, timeline })
    }

    #[allow(clippy::too_many_arguments)]
    fn replay_layer(
        &self,
        stream: &LayerStream,
        mut cache: ExpertCache,
        cost: &CostModel,
        charge_scoring: bool,
        record: Record,
        evictions: &mut Vec<EvictionRecord>,
        timeline: &mut Vec<TimelineRow>,
    ) -> LayerTally {
        let mut t = LayerTally::default();
        let mut seen = vec![false; stream.num_experts];
        let mut pending: VecDeque<(usize, ExpertId)> = VecDeque::new();
        let w = self.opts.refetch_window;
        let mut prev_seq = None;

        for (gi, g) in stream.groups.iter().enumerate() {
            pending.retain(|&(at, victim)| {
                if gi - at > w {
                    false
                } else if g.experts.contains(&victim) {
                    t.refetches += 1;
                    false
                } else {
                    true
                }
            });
            if prev_seq != Some(g.seq_id) {
                cache.begin_sequence();
                prev_seq = Some(g.seq_id);
            }
            cache.begin_group(g);
            let decode = g.phase == Phase::Decode;
            let counted = decode || self.opts.include_prefill_in_hit_rate;
            let pinned: &[ExpertId] = if decode { &g.experts } else { &[] };
            let mut misses = 0usize;
            for (pos, &x) in g.positions().zip(&g.experts) {
                let d = cache.access(x, pos, pinned);
                let first = !std::mem::replace(&mut seen[x], true);
                if d.was_hit {
                    if decode {
                        t.decode_hits += 1
                    } else {
                        t.prefill_hits += 1
                    }
                } else {
                    misses += 1;
                    if decode {
                        t.decode_misses += 1
                    } else {
                        t.prefill_misses += 1
                    }
                    if first && counted {
                        t.compulsory += 1;
                    }
                }
                if record.timeline {
                    let kind = if d.was_hit { TimelineKind::Hit } else { TimelineKind::Miss };
                    timeline.push(TimelineRow {
                        layer: stream.layer,
                        step: gi,
                        seq_id: g.seq_id,
                        phase: g.phase,
                        expert: x,
                        kind,
                    });
                }
                if let Some(victim) = d.evicted {
                    t.evictions += 1;
                    pending.push_back((gi, victim));
                    if record.evictions {
                        evictions.push(EvictionRecord { layer: stream.layer, pos, group: gi, victim });
                    }
                    if record.timeline {
                        timeline.push(TimelineRow {
                            layer: stream.layer,
                            step: gi,
                            seq_id: g.seq_id,
                            phase: g.phase,
                            expert: victim,
                            kind: TimelineKind::Evict,
                        });
                    }
                }
            }
            let latency = cost.step_latency(g.experts.len(), misses);
            if decode {
                t.decode_latency += latency;
                if charge_scoring {
                    t.decode_latency += cost.ml_scoring;
                }
            } else {
                t.prefill_latency += latency;
            }
        }
        t
    }

    fn finish(&self, policy: &PolicyConfig, capacity: usize, t: LayerTally) -> SimReport {
        let (hits, misses) = if self.opts.include_prefill_in_hit_rate {
            (t.decode_hits + t.prefill_hits, t.decode_misses + t.prefill_misses)
        } else {
            (t.decode_hits, t.decode_misses)
        };
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let decode_tokens = self.trace.decode_tokens() as u64;
        let secs = t.decode_latency.as_secs_f64();
        SimReport {
            policy: policy.name().to_string(),
            capacity,
            hits,
            misses,
            hit_rate: ratio(hits, hits + misses),
            compulsory_misses: t.compulsory,
            warm_hit_rate: ratio(hits, hits + misses - t.compulsory),
            io_count: misses,
            decode_hits: t.decode_hits,
            decode_misses: t.decode_misses,
            prefill_hits: t.prefill_hits,
            prefill_misses: t.prefill_misses,
            evictions: t.evictions,
            refetches: t.refetches,
            refetch_window: self.opts.refetch_window,
            refetch_within_w: ratio(t.refetches, t.evictions),
            decode_tokens,
            est_decode_latency_ns: t.decode_latency.as_nanos() as u64,
            prefill_latency_ns: t.prefill_latency.as_nanos() as u64,
            tokens_per_second_est: if secs > 0.0 { decode_tokens as f64 / secs } else { 0.0 },
        }
    }

    /// Every (policy, capacity) pair, evaluated in parallel. Rows are ordered
    /// by policy name, then capacity.
    pub fn sweep(
        &self,
        policies: &[PolicyConfig],
        capacities: &[usize],
        cost: &CostModel,
    ) -> Result<Vec<SimReport>, SimError> {
        for &c in capacities {
            self.check_capacity(c)?;
        }
        let mut cells: Vec<(usize, &PolicyConfig, usize)> = Vec::new();
        for (i, p) in policies.iter().enumerate() {
            for &c in capacities {
                cells.push((i, p, c));
            }
        }
        cells.sort_by(|a, b| (a.1.name(), a.2, a.0).cmp(&(b.1.name(), b.2, b.0)));
        cells.par_iter().map(|&(_, p, c)| self.simulate(p, c, cost)).collect()
    }
}

/// Replays `trace` under one policy with default options.
pub fn simulate(
    trace: &RoutingTrace,
    policy: &PolicyConfig,
    capacity: usize,
    cost: &CostModel,
) -> Result<SimReport, SimError> {
    Simulator::new(trace, SimOptions::default()).simulate(policy, capacity, cost)
}
