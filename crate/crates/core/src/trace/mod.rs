//! Routing-trace data model and its line-delimited JSON file format.
//!
//! A trace file is UTF-8 text. The first line is the header record, every
//! following line is one event record:
//!
//! ```text
//! {"model_name":"synthetic","num_layers":2,"num_experts":8,"top_k":2}
//! {"seq_id":0,"phase":0,"step":0,"layer":0,"experts":[3,5]}
//! {"seq_id":0,"phase":1,"step":0,"layer":0,"experts":[5,1]}
//! ```
//!
//! `phase` is `0` for prefill and `1` for decode. Unknown fields are rejected.
//! Prefill is stored token by token; deduplicating a prompt's experts into a
//! single load set is done by the simulator, not by the format.

mod coverage;
mod generate;

pub use coverage::prefill_coverage;
pub use generate::{generate_trace, popularity_ranks, zipf_mass, SyntheticWorkloadConfig};

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Index of an expert within one MoE layer.
pub type ExpertId = usize;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("invalid config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid trace: event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("malformed trace file, line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },
    #[error("header mismatch, line {line}: {reason}")]
    HeaderMismatch { line: usize, reason: String },
    #[error("insufficient prefill tokens: sequence {seq_id} has {have}, need {need}")]
    InsufficientTokens { seq_id: u64, have: usize, need: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub model_name: String,
    pub num_layers: usize,
    pub num_experts: usize,
    pub top_k: usize,
}

impl TraceHeader {
    pub fn new(model_name: impl Into<String>, num_layers: usize, num_experts: usize, top_k: usize) -> Self {
        Self { model_name: model_name.into(), num_layers, num_experts, top_k }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.num_layers == 0 {
            return Err(TraceError::InvalidHeader("num_layers must be >= 1".into()));
        }
        if self.num_experts == 0 {
            return Err(TraceError::InvalidHeader("num_experts must be >= 1".into()));
        }
        if self.top_k == 0 || self.top_k > self.num_experts {
            return Err(TraceError::InvalidHeader(format!(
                "top_k must satisfy 1 <= top_k <= num_experts ({}), got {}",
                self.num_experts, self.top_k
            )));
        }
        Ok(())
    }
}

/// Inference phase of an event. Serialized as `0` (prefill) or `1` (decode),
/// which also gives the ordering used by [`RoutingTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Prefill,
    Decode,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Prefill => 0,
            Phase::Decode => 1,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Prefill => "prefill",
            Phase::Decode => "decode",
        })
    }
}

impl Serialize for Phase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for Phase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(Phase::Prefill),
            1 => Ok(Phase::Decode),
            other => Err(serde::de::Error::custom(format!("phase must be 0 or 1, got {other}"))),
        }
    }
}

/// Experts selected by one token (or one prompt token) at one layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessEvent {
    pub seq_id: u64,
    pub phase: Phase,
    pub step: u64,
    pub layer: usize,
    pub experts: Vec<ExpertId>,
}

impl AccessEvent {
    pub fn order_key(&self) -> (u64, Phase, u64, usize) {
        (self.seq_id, self.phase, self.step, self.layer)
    }
}

enum Violation {
    Header(String),
    Event(String),
}

fn check_event(header: &TraceHeader, ev: &AccessEvent) -> Result<(), Violation> {
    if ev.layer >= header.num_layers {
        return Err(Violation::Header(format!("layer {} out of range (num_layers = {})", ev.layer, header.num_layers)));
    }
    if let Some(&bad) = ev.experts.iter().find(|&&e| e >= header.num_experts) {
        return Err(Violation::Header(format!("expert id {bad} out of range (num_experts = {})", header.num_experts)));
    }
    let mut seen = vec![false; header.num_experts];
    for &e in &ev.experts {
        if std::mem::replace(&mut seen[e], true) {
            return Err(Violation::Event(format!("duplicate expert id {e} within one event")));
        }
    }
    match ev.phase {
        Phase::Decode if ev.experts.len() != header.top_k => Err(Violation::Event(format!(
            "decode event must route exactly top_k = {} experts, got {}",
            header.top_k,
            ev.experts.len()
        ))),
        Phase::Prefill if ev.experts.is_empty() => {
            Err(Violation::Event("prefill event must route at least one expert".into()))
        }
        _ => Ok(()),
    }
}

/// Ordered routing history plus the model shape it was recorded on.
/// Immutable once constructed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoutingTrace {
    header: TraceHeader,
    events: Vec<AccessEvent>,
}

impl RoutingTrace {
    pub fn new(header: TraceHeader, events: Vec<AccessEvent>) -> Result<Self, TraceError> {
        header.validate()?;
        for (index, ev) in events.iter().enumerate() {
            check_event(&header, ev).map_err(|v| match v {
                Violation::Header(reason) | Violation::Event(reason) => TraceError::InvalidEvent { index, reason },
            })?;
        }
        check_order(&header, &events).map_err(|(index, reason)| TraceError::InvalidEvent { index, reason })?;
        Ok(Self { header, events })
    }

    pub fn header(&self) -> &TraceHeader {
        &self.header
    }

    pub fn events(&self) -> &[AccessEvent] {
        &self.events
    }

    pub fn num_layers(&self) -> usize {
        self.header.num_layers
    }

    pub fn num_experts(&self) -> usize {
        self.header.num_experts
    }

    pub fn top_k(&self) -> usize {
        self.header.top_k
    }

    /// Number of distinct (seq_id, decode step) pairs, i.e. generated tokens.
    pub fn decode_tokens(&self) -> usize {
        self.events.iter().filter(|e| e.phase == Phase::Decode && e.layer == 0).count()
    }

    pub fn seq_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.events.iter().map(|e| e.seq_id).collect();
        ids.dedup();
        ids
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        serde_json::to_writer(&mut w, &self.header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for ev in &self.events {
            serde_json::to_writer(&mut w, ev).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines();
        let header: TraceHeader = match lines.next() {
            None => return Err(TraceError::MalformedFile { line: 1, reason: "missing header line".into() }),
            Some(line) => serde_json::from_str(&line?)
                .map_err(|e| TraceError::MalformedFile { line: 1, reason: format!("header: {e}") })?,
        };
        header.validate().map_err(|e| TraceError::MalformedFile { line: 1, reason: e.to_string() })?;

        let mut events = Vec::new();
        let mut pending_blank: Option<usize> = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                pending_blank.get_or_insert(line_no);
                continue;
            }
            if let Some(blank) = pending_blank {
                return Err(TraceError::MalformedFile { line: blank, reason: "blank line inside trace".into() });
            }
            let ev: AccessEvent = serde_json::from_str(&line)
                .map_err(|e| TraceError::MalformedFile { line: line_no, reason: e.to_string() })?;
            check_event(&header, &ev).map_err(|v| match v {
                Violation::Header(reason) => TraceError::HeaderMismatch { line: line_no, reason },
                Violation::Event(reason) => TraceError::MalformedFile { line: line_no, reason },
            })?;
            events.push(ev);
        }
        check_order(&header, &events)
            .map_err(|(index, reason)| TraceError::MalformedFile { line: index + 2, reason })?;
        Ok(Self { header, events })
    }
}

/// Checks the total order and the one-event-per-layer rule for decode steps.
/// Returns the offending event index on failure.
fn check_order(header: &TraceHeader, events: &[AccessEvent]) -> Result<(), (usize, String)> {
    for (i, pair) in events.windows(2).enumerate() {
        if pair[0].order_key() >= pair[1].order_key() {
            return Err((
                i + 1,
                format!(
                    "events out of order: (seq {}, phase {}, step {}, layer {}) does not follow (seq {}, phase {}, step {}, layer {})",
                    pair[1].seq_id, pair[1].phase, pair[1].step, pair[1].layer,
                    pair[0].seq_id, pair[0].phase, pair[0].step, pair[0].layer,
                ),
            ));
        }
    }
    let mut i = 0;
    while i < events.len() {
        let ev = &events[i];
        if ev.phase != Phase::Decode {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < events.len()
            && events[j].phase == Phase::Decode
            && events[j].seq_id == ev.seq_id
            && events[j].step == ev.step
        {
            j += 1;
        }
        // Strict ordering plus layer < L means a full group is exactly 0..L.
        if j - i != header.num_layers {
            return Err((
                i,
                format!(
                    "decode step {} of sequence {} has {} layer events, expected {}",
                    ev.step,
                    ev.seq_id,
                    j - i,
                    header.num_layers
                ),
            ));
        }
        i = j;
    }
    Ok(())
}

pub fn write_trace(trace: &RoutingTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let file = File::create(path)?;
    trace.write_to(BufWriter::new(file))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<RoutingTrace, TraceError> {
    let file = File::open(path)?;
    RoutingTrace::read_from(BufReader::new(file))
}
