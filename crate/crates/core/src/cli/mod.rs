//! Command-line driver. Every command reads one [`RunConfig`] (TOML) and
//! applies flag overrides on top of it.

mod config;
pub mod output;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{MlSection, ModelSection, RunConfig, SimSection, DEFAULT_OUT_DIR};
use output::{
    write_csv, write_json, write_timeline, Diagnostics, DuelEntry, EvalReport, HitRatePoint, RefetchEntry,
    ThroughputPoint, TraceSummary, TrainLogRow,
};

use crate::ml::{build_dataset, train_layers, LayerDataset, NetSet};
use crate::sim::{
    cache_size_calc, eviction_quality_duel, HardwareBudget, PolicyConfig, Record, SimReport, Simulator,
    REPORT_SCHEMA_VERSION,
};
use crate::trace::{generate_trace, read_trace, write_trace, Phase, RoutingTrace};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "expertsim", version, about = "Trace-driven expert cache simulator for MoE inference")]
pub struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seeds trace generation, training and randomized policies.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: expertsim-out).
    #[arg(long, global = true, env = "EXPERTSIM_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for sweeps and per-layer training (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic routing trace.
    GenTrace(GenTraceArgs),
    /// Build the Belady-labelled dataset and train the eviction networks.
    Train(TrainArgs),
    /// Sweep policies x capacities and write the report.
    Eval(EvalArgs),
    /// Refetch rates, pairwise eviction duels and eviction timelines.
    Diagnose(DiagnoseArgs),
    /// Per-layer cache capacity that fits in a VRAM budget.
    ///
    /// Computes floor((vram - nonexpert) * experts_per_layer / all_experts),
    /// clamped to [0, experts_per_layer]. `all_experts` is the size of every
    /// expert of every layer, so all_experts / experts_per_layer is the cost
    /// of one cache slot replicated across all layers. Sizes accept the
    /// suffixes K, M, G, T (powers of 1000) and KiB, MiB, GiB, TiB.
    CacheSize(CacheSizeArgs),
    /// Check a trace file against the format rules.
    ValidateTrace(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    /// Output file (default: <out-dir>/trace.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub experts: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub num_seqs: Option<usize>,
    #[arg(long)]
    pub decode_steps: Option<usize>,
    #[arg(long)]
    pub prefill_tokens: Option<usize>,
    #[arg(long)]
    pub zipf_s: Option<f64>,
    #[arg(long)]
    pub recency_boost: Option<f64>,
    #[arg(long)]
    pub w_hot: Option<usize>,
    #[arg(long)]
    pub popularity_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TraceArg {
    /// Trace file; without it a trace is synthesized from the config.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    /// Capacity of the Belady replay that labels the data.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// One network for all layers.
    #[arg(long)]
    pub shared: bool,
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub d_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<PolicyConfig>>,
    #[arg(long, value_delimiter = ',')]
    pub capacities: Option<Vec<usize>>,
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Count prompt accesses in the headline hit rate.
    #[arg(long)]
    pub include_prefill: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub trace: TraceArg,
    #[arg(long, value_delimiter = ',')]
    pub policies: Option<Vec<PolicyConfig>>,
    /// Cache capacity (default: first configured capacity).
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Refetch window in steps.
    #[arg(long)]
    pub window: Option<usize>,
    /// Only write timeline rows for this layer.
    #[arg(long)]
    pub timeline_layer: Option<usize>,
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CacheSizeArgs {
    /// Total device memory.
    #[arg(long, value_parser = parse_bytes)]
    pub vram: Option<u64>,
    /// Memory taken by everything except experts (attention, embeddings, KV cache).
    #[arg(long, value_parser = parse_bytes)]
    pub nonexpert: Option<u64>,
    /// Size of all experts of all layers together.
    #[arg(long, value_parser = parse_bytes)]
    pub all_experts: Option<u64>,
    /// Experts per MoE layer.
    #[arg(long)]
    pub experts_per_layer: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
    /// Treat warnings as errors.
    #[arg(long)]
    pub strict: bool,
}

/// Parses `123`, `16G`, `16GB`, `1.5GiB`, ... into bytes.
pub fn parse_bytes(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let mult: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" => 1_000,
        "m" | "mb" => 1_000_000,
        "g" | "gb" => 1_000_000_000,
        "t" | "tb" => 1_000_000_000_000,
        "kib" => 1 << 10,
        "mib" => 1 << 20,
        "gib" => 1 << 30,
        "tib" => 1 << 40,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    if let Ok(n) = num.parse::<u64>() {
        return n.checked_mul(mult).ok_or_else(|| format!("{s} overflows"));
    }
    let x: f64 = num.parse().map_err(|_| format!("invalid size {s:?}"))?;
    let bytes = (x * mult as f64).round();
    if !(bytes.is_finite() && bytes >= 0.0 && bytes < u64::MAX as f64) {
        return Err(format!("invalid size {s:?}"));
    }
    Ok(bytes as u64)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = Some(d.clone());
    }
    let pool = match cli.jobs {
        Some(0) => return Err(Error::Config("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenTrace(a) => cmd_gen_trace(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::Diagnose(a) => cmd_diagnose(cfg, a),
        Command::CacheSize(a) => cmd_cache_size(cfg, a),
        Command::ValidateTrace(a) => cmd_validate_trace(a),
    })
}

fn summary(trace: &RoutingTrace) -> TraceSummary {
    TraceSummary {
        header: trace.header().clone(),
        sequences: trace.seq_ids().len(),
        events: trace.events().len(),
        decode_tokens: trace.decode_tokens(),
    }
}

fn print_summary(trace: &RoutingTrace) {
    let h = trace.header();
    println!(
        "{}: {} layers, {} experts, top-{}; {} sequences, {} events, {} decode tokens",
        h.model_name,
        h.num_layers,
        h.num_experts,
        h.top_k,
        trace.seq_ids().len(),
        trace.events().len(),
        trace.decode_tokens()
    );
}

/// The trace named by the flag or config, or one synthesized from the config.
fn load_trace(cfg: &mut RunConfig, arg: &TraceArg) -> Result<RoutingTrace, Error> {
    if let Some(t) = &arg.trace {
        cfg.trace = Some(t.clone());
    }
    cfg.validate()?;
    match &cfg.trace {
        Some(p) => Ok(read_trace(p)?),
        None => Ok(generate_trace(&cfg.model.header(), &cfg.workload)?),
    }
}

fn create_out_dir(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_gen_trace(mut cfg: RunConfig, a: GenTraceArgs) -> Result<(), Error> {
    let m = &mut cfg.model;
    m.num_layers = a.layers.unwrap_or(m.num_layers);
    m.num_experts = a.experts.unwrap_or(m.num_experts);
    m.top_k = a.top_k.unwrap_or(m.top_k);
    let w = &mut cfg.workload;
    w.num_seqs = a.num_seqs.unwrap_or(w.num_seqs);
    w.decode_steps = a.decode_steps.unwrap_or(w.decode_steps);
    w.prefill_tokens = a.prefill_tokens.unwrap_or(w.prefill_tokens);
    w.zipf_s = a.zipf_s.unwrap_or(w.zipf_s);
    w.recency_boost = a.recency_boost.unwrap_or(w.recency_boost);
    w.w_hot = a.w_hot.unwrap_or(w.w_hot);
    if a.popularity_seed.is_some() {
        w.popularity_seed = a.popularity_seed;
    }
    let trace = generate_trace(&cfg.model.header(), &cfg.workload)?;
    let path = match a.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            p
        }
        None => create_out_dir(&cfg)?.join("trace.jsonl"),
    };
    write_trace(&trace, &path)?;
    print_summary(&trace);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_train(mut cfg: RunConfig, a: TrainArgs) -> Result<(), Error> {
    if let Some(d) = a.checkpoints {
        cfg.ml.checkpoints = Some(d);
    }
    cfg.ml.shared |= a.shared;
    cfg.ml.train_capacity = a.capacity.or(cfg.ml.train_capacity);
    cfg.train.max_epochs = a.max_epochs.unwrap_or(cfg.train.max_epochs);
    cfg.train.patience = a.patience.unwrap_or(cfg.train.patience);
    cfg.dataset.d_max = a.d_max.unwrap_or(cfg.dataset.d_max);
    let trace = load_trace(&mut cfg, &a.trace)?;
    let capacity = cfg.ml.train_capacity.unwrap_or((trace.num_experts() / 2).max(trace.top_k()));
    if capacity < trace.top_k() {
        return Err(crate::sim::SimError::CapacityTooSmall { capacity, top_k: trace.top_k() }.into());
    }
    print_summary(&trace);

    let datasets: Vec<LayerDataset> = build_dataset(&trace, capacity, &cfg.dataset);
    let n: usize = datasets.iter().map(|d| d.samples.len()).sum();
    println!("dataset: {n} samples over {} layers (capacity {capacity})", datasets.len());
    let (nets, runs) = train_layers(&datasets, &cfg.train, cfg.rng_seed, cfg.ml.shared)?;

    let mut log = Vec::new();
    for r in &runs {
        let o = &r.outcome;
        let first = &o.log[0];
        let best = &o.log[o.best_epoch];
        let who = r.layer.map_or("shared".to_string(), |l| format!("layer {l}"));
        println!(
            "{who}: val mse {:.6} -> {:.6} (best epoch {} of {}{})",
            first.val_mse,
            best.val_mse,
            o.best_epoch,
            o.log.len() - 1,
            if o.stopped_early { ", stopped early" } else { "" }
        );
        log.extend(o.log.iter().map(|e| TrainLogRow {
            layer: r.layer,
            epoch: e.epoch,
            train_mse: e.train_mse,
            val_mse: e.val_mse,
        }));
    }
    let out = create_out_dir(&cfg)?;
    let paths = nets.save(&cfg.checkpoint_dir())?;
    write_csv(&out.join("train_log.csv"), &log)?;
    for p in &paths {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", out.join("train_log.csv").display());
    Ok(())
}

fn build_simulator<'a>(
    cfg: &RunConfig,
    trace: &'a RoutingTrace,
    policies: &[PolicyConfig],
) -> Result<Simulator<'a>, Error> {
    let sim = Simulator::new(trace, cfg.sim_options());
    if policies.contains(&PolicyConfig::Ml) {
        let nets = NetSet::load(&cfg.checkpoint_dir(), trace.num_layers(), trace.num_experts())?;
        return Ok(sim.with_nets(nets)?);
    }
    Ok(sim)
}

fn print_table(rows: &[SimReport]) {
    println!(
        "{:<8} {:>8} {:>9} {:>9} {:>10} {:>9} {:>12} {:>10}",
        "policy", "capacity", "hit_rate", "warm_hit", "misses", "refetch", "latency_ms", "tokens/s"
    );
    for r in rows {
        println!(
            "{:<8} {:>8} {:>9.4} {:>9.4} {:>10} {:>9.4} {:>12.3} {:>10.2}",
            r.policy,
            r.capacity,
            r.hit_rate,
            r.warm_hit_rate,
            r.misses,
            r.refetch_within_w,
            r.est_decode_latency_ns as f64 / 1e6,
            r.tokens_per_second_est
        );
    }
}

fn cmd_eval(mut cfg: RunConfig, a: EvalArgs) -> Result<(), Error> {
    if let Some(p) = a.policies {
        cfg.policies = p;
    }
    if let Some(c) = a.capacities {
        cfg.capacities = c;
    }
    if let Some(d) = a.checkpoints {
        cfg.ml.checkpoints = Some(d);
    }
    cfg.sim.include_prefill_in_hit_rate |= a.include_prefill;
    let trace = load_trace(&mut cfg, &a.trace)?;
    let sim = build_simulator(&cfg, &trace, &cfg.policies)?;
    let rows = sim.sweep(&cfg.policies, &cfg.capacities, &cfg.cost)?;

    print_summary(&trace);
    print_table(&rows);
    let out = create_out_dir(&cfg)?;
    let hit: Vec<HitRatePoint> = rows
        .iter()
        .map(|r| HitRatePoint { policy: r.policy.clone(), capacity: r.capacity, hit_rate: r.hit_rate })
        .collect();
    let tps: Vec<ThroughputPoint> = rows
        .iter()
        .map(|r| ThroughputPoint {
            policy: r.policy.clone(),
            capacity: r.capacity,
            tokens_per_second: r.tokens_per_second_est,
        })
        .collect();
    write_csv(&out.join("report.csv"), &rows)?;
    write_csv(&out.join("series_hit_rate.csv"), &hit)?;
    write_csv(&out.join("series_tokens_per_s.csv"), &tps)?;
    write_json(&out.join("report.json"), &EvalReport::new(summary(&trace), rows))?;
    println!("wrote {}", out.join("report.json").display());
    Ok(())
}

fn cmd_diagnose(mut cfg: RunConfig, a: DiagnoseArgs) -> Result<(), Error> {
    if let Some(p) = a.policies {
        cfg.policies = p;
    }
    if let Some(w) = a.window {
        cfg.sim.refetch_window = w;
    }
    if let Some(d) = a.checkpoints {
        cfg.ml.checkpoints = Some(d);
    }
    let trace = load_trace(&mut cfg, &a.trace)?;
    let capacity = a.capacity.unwrap_or(cfg.capacities[0]);
    if let Some(l) = a.timeline_layer {
        if l >= trace.num_layers() {
            return Err(Error::Config(format!(
                "--timeline-layer {l} is out of range (trace has {} layers)",
                trace.num_layers()
            )));
        }
    }
    let sim = build_simulator(&cfg, &trace, &cfg.policies)?;
    let mut runs = Vec::new();
    for p in &cfg.policies {
        runs.push(sim.run(p, capacity, &cfg.cost, Record { evictions: true, timeline: true })?);
    }

    let out = create_out_dir(&cfg)?;
    let mut refetch = Vec::new();
    for (p, run) in cfg.policies.iter().zip(&mut runs) {
        if let Some(l) = a.timeline_layer {
            run.timeline.retain(|r| r.layer == l);
        }
        let file = format!("timeline_{}.csv", p.name());
        write_timeline(&out.join(&file), &run.timeline)?;
        let r = &run.report;
        refetch.push(RefetchEntry {
            policy: p.name().to_string(),
            evictions: r.evictions,
            refetches: r.refetches,
            refetch_rate: r.refetch_within_w,
            accesses: r.decode_hits + r.decode_misses + r.prefill_hits + r.prefill_misses,
            timeline_file: file,
            timeline_rows: run.timeline.len(),
        });
    }
    let mut duel = Vec::new();
    for (pa, ra) in cfg.policies.iter().zip(&runs) {
        for (pb, rb) in cfg.policies.iter().zip(&runs) {
            duel.push(DuelEntry {
                a: pa.name().to_string(),
                b: pb.name().to_string(),
                outcome: eviction_quality_duel(&ra.evictions, &rb.evictions, sim.oracles()),
            });
        }
    }

    print_summary(&trace);
    println!("capacity {capacity}, refetch window {}", cfg.sim.refetch_window);
    for r in &refetch {
        println!("{:<8} evictions {:>8}  refetch rate {:.4}", r.policy, r.evictions, r.refetch_rate);
    }
    println!("eviction duel (row better than column):");
    print!("{:<8}", "");
    for p in &cfg.policies {
        print!(" {:>8}", p.name());
    }
    println!();
    for (i, pa) in cfg.policies.iter().enumerate() {
        print!("{:<8}", pa.name());
        for j in 0..cfg.policies.len() {
            print!(" {:>8.4}", duel[i * cfg.policies.len() + j].outcome.fraction_a_better);
        }
        println!();
    }
    let diag = Diagnostics {
        schema_version: REPORT_SCHEMA_VERSION,
        trace: summary(&trace),
        capacity,
        window: cfg.sim.refetch_window,
        refetch,
        duel,
    };
    write_json(&out.join("diagnostics.json"), &diag)?;
    println!("wrote {}", out.join("diagnostics.json").display());
    Ok(())
}

fn cmd_cache_size(cfg: RunConfig, a: CacheSizeArgs) -> Result<(), Error> {
    let base = cfg.budget;
    let need = |flag: Option<u64>, from: Option<u64>, name: &str| {
        flag.or(from)
            .ok_or_else(|| Error::Config(format!("cache-size: --{name} is required (or [budget] in the config)")))
    };
    let budget = HardwareBudget {
        vram_bytes: need(a.vram, base.map(|b| b.vram_bytes), "vram")?,
        nonexpert_bytes: need(a.nonexpert, base.map(|b| b.nonexpert_bytes), "nonexpert")?,
        all_experts_bytes: need(a.all_experts, base.map(|b| b.all_experts_bytes), "all-experts")?,
        experts_per_layer: need(
            a.experts_per_layer.map(|n| n as u64),
            base.map(|b| b.experts_per_layer as u64),
            "experts-per-layer",
        )? as usize,
    };
    println!("{}", cache_size_calc(&budget));
    Ok(())
}

/// Findings that do not make a trace invalid but usually indicate a broken
/// extraction.
pub fn trace_warnings(trace: &RoutingTrace) -> Vec<String> {
    let mut warnings = Vec::new();
    let k = trace.top_k();
    for seq in trace.seq_ids() {
        let events: Vec<_> = trace.events().iter().filter(|e| e.seq_id == seq).collect();
        if !events.iter().any(|e| e.phase == Phase::Decode) {
            warnings.push(format!("sequence {seq} has no decode events"));
        }
        for e in events.iter().filter(|e| e.phase == Phase::Prefill && e.experts.len() < k) {
            warnings.push(format!(
                "sequence {seq} prefill step {} layer {}: {} experts, fewer than top_k {k}",
                e.step,
                e.layer,
                e.experts.len()
            ));
        }
    }
    warnings
}

fn cmd_validate_trace(a: ValidateArgs) -> Result<(), Error> {
    let trace = read_trace(&a.path)?;
    print_summary(&trace);
    let warnings = trace_warnings(&trace);
    for w in &warnings {
        println!("warning: {w}");
    }
    println!("{} warnings", warnings.len());
    if a.strict && !warnings.is_empty() {
        return Err(Error::Config(format!("{}: {} warnings (strict)", a.path.display(), warnings.len())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("123").unwrap(), 123);
        assert_eq!(parse_bytes("16G").unwrap(), 16_000_000_000);
        assert_eq!(parse_bytes("16GiB").unwrap(), 16 << 30);
        assert_eq!(parse_bytes("1.5 KiB").unwrap(), 1536);
        assert!(parse_bytes("12 parsecs").is_err());
        assert!(parse_bytes("x").is_err());
    }

    #[test]
    fn cli_parses_globals_after_subcommand() {
        let cli = Cli::try_parse_from([
            "expertsim",
            "eval",
            "--policies",
            "lru,belady",
            "--seed",
            "3",
            "--capacities",
            "8,16",
        ])
        .unwrap();
        assert_eq!(cli.seed, Some(3));
        match cli.command {
            Command::Eval(a) => {
                assert_eq!(a.policies.unwrap(), vec![PolicyConfig::Lru, PolicyConfig::Belady]);
                assert_eq!(a.capacities.unwrap(), vec![8, 16]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_policy_flag_is_rejected() {
        assert!(Cli::try_parse_from(["expertsim", "eval", "--policies", "lru,nope"]).is_err());
    }

    #[test]
    fn trace_path_helper_rejects_missing_file() {
        let mut cfg = RunConfig::default();
        let arg = TraceArg { trace: Some(PathBuf::from("/definitely/missing.jsonl")) };
        assert!(matches!(load_trace(&mut cfg, &arg), Err(Error::Config(m)) if m.contains("does not exist")));
    }
}
