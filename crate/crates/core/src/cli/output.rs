//! Machine-readable outputs and their readers.
//!
//! | file                          | written by | content                                   |
//! |-------------------------------|------------|-------------------------------------------|
//! | `report.json`                 | eval       | [`EvalReport`]                            |
//! | `report.csv`                  | eval       | one [`SimReport`] per row                 |
//! | `series_hit_rate.csv`         | eval       | `policy,capacity,hit_rate`                |
//! | `series_tokens_per_s.csv`     | eval       | `policy,capacity,tokens_per_second`       |
//! | `train_log.csv`               | train      | `layer,epoch,train_mse,val_mse`           |
//! | `diagnostics.json`            | diagnose   | [`Diagnostics`]                           |
//! | `timeline_<policy>.csv`       | diagnose   | `layer,step,seq_id,phase,expert,kind`     |

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::sim::{DuelOutcome, SimReport, TimelineKind, TimelineRow, REPORT_SCHEMA_VERSION};
use crate::trace::{Phase, TraceHeader};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSummary {
    pub header: TraceHeader,
    pub sequences: usize,
    pub events: usize,
    pub decode_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub schema_version: u32,
    pub trace: TraceSummary,
    pub rows: Vec<SimReport>,
}

impl EvalReport {
    pub fn new(trace: TraceSummary, rows: Vec<SimReport>) -> Self {
        Self { schema_version: REPORT_SCHEMA_VERSION, trace, rows }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRatePoint {
    pub policy: String,
    pub capacity: usize,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPoint {
    pub policy: String,
    pub capacity: usize,
    pub tokens_per_second: f64,
}

/// One line of the training log; `layer` is empty for a shared network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub layer: Option<usize>,
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefetchEntry {
    pub policy: String,
    pub evictions: u64,
    pub refetches: u64,
    pub refetch_rate: f64,
    pub accesses: u64,
    pub timeline_file: String,
    pub timeline_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelEntry {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub outcome: DuelOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostics {
    pub schema_version: u32,
    pub trace: TraceSummary,
    pub capacity: usize,
    pub window: usize,
    pub refetch: Vec<RefetchEntry>,
    pub duel: Vec<DuelEntry>,
}

#[derive(Serialize, Deserialize)]
struct TimelineCsvRow {
    layer: usize,
    step: usize,
    seq_id: u64,
    phase: String,
    expert: usize,
    kind: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Error> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_timeline(path: &Path, rows: &[TimelineRow]) -> Result<(), Error> {
    let rows: Vec<TimelineCsvRow> = rows
        .iter()
        .map(|r| TimelineCsvRow {
            layer: r.layer,
            step: r.step,
            seq_id: r.seq_id,
            phase: r.phase.to_string(),
            expert: r.expert,
            kind: r.kind.as_str().to_string(),
        })
        .collect();
    write_csv(path, &rows)
}

/// Reads a timeline file, rejecting unknown phases and kinds.
pub fn read_timeline(path: &Path) -> Result<Vec<TimelineRow>, Error> {
    let raw: Vec<TimelineCsvRow> = read_csv(path)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bad =
                |what: &str, v: &str| Error::Config(format!("{}: row {}: unknown {what} {v:?}", path.display(), i + 1));
            let phase = match r.phase.as_str() {
                "prefill" => Phase::Prefill,
                "decode" => Phase::Decode,
                other => return Err(bad("phase", other)),
            };
            let kind = match r.kind.as_str() {
                "hit" => TimelineKind::Hit,
                "miss" => TimelineKind::Miss,
                "evict" => TimelineKind::Evict,
                other => return Err(bad("kind", other)),
            };
            Ok(TimelineRow { layer: r.layer, step: r.step, seq_id: r.seq_id, phase, expert: r.expert, kind })
        })
        .collect()
}
