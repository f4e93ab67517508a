//! Trace-driven simulation of per-layer expert caches for mixture-of-experts
//! inference.
//!
//! - [`trace`]: routing traces, their JSONL format and a synthetic generator.
//! - [`cache`]: the cache, classical replacement policies and Belady's oracle.
//! - [`ml`]: the learned eviction policy, its dataset and trainer.
//! - [`sim`]: the simulator, cost model, capacity calculator and diagnostics.
//! - [`cli`]: the `expertsim` command-line driver.

pub mod cache;
pub mod cli;
pub mod ml;
pub mod sim;
pub mod trace;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] trace::TraceError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Ml(#[from] ml::MlError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
