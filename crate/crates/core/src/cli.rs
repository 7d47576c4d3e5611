//! The `dpt` command line: dataset generation, single-cell benchmarks,
//! grid-search tuning, and report post-processing.
//!
//! Exit codes: 0 success, 1 file or dataset-integrity failure, 2 usage
//! error, 3 memory overflow (bench), 4 no feasible configuration (tune).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{
    generate_dataset, item_bytes_for_resolution, CacheEmulator, LatencyModel, Manifest,
};
use crate::error::{Error, Result};
use crate::loader::{run_epoch, LoaderConfig, SinkConfig};
use crate::pipeline::TransformCost;
use crate::report::{
    append_grid_csv, emit, grid_records, grid_records_from_trial, read_grid_csv,
    read_outcome_json, summary_csv_text, write_grid_csv, write_outcome_json, GridRecord,
};
use crate::tuner::{
    check_overflow, dpt_search_with, estimate_memory, Objective, SearchEvent, TrialResult,
    TrialStatus, TuneConfig, BASELINE_PREFETCH, BASELINE_WORKERS,
};
use crate::units::{parse_bytes, parse_duration, Picos};

#[derive(Parser)]
#[command(
    name = "dpt",
    version,
    about = "Tune dataloader worker and prefetch parameters against a storage emulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest
    Gen(GenArgs),
    /// Measure transfer time for one (workers, prefetch) configuration
    Bench(BenchArgs),
    /// Grid-search workers and prefetch factor for the fastest transfer
    Tune(TuneArgs),
    /// Derive normalized and summary tables from a run directory
    Report(ReportArgs),
}

fn parse_bytes_arg(s: &str) -> std::result::Result<u64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

fn parse_duration_arg(s: &str) -> std::result::Result<Picos, String> {
    parse_duration(s).map_err(|e| e.to_string())
}

fn parse_objective_arg(s: &str) -> std::result::Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct GenArgs {
    /// Dataset output directory
    #[arg(long)]
    out: PathBuf,
    /// Number of items to generate
    #[arg(long)]
    items: u32,
    /// Size of every item (suffixes B/KiB/MiB/GiB)
    #[arg(long, value_parser = parse_bytes_arg, required_unless_present = "resolution", conflicts_with = "resolution")]
    item_bytes: Option<u64>,
    /// Square image resolution; item size becomes 3 * r * r bytes
    #[arg(long)]
    resolution: Option<u32>,
    /// Number of distinct labels, assigned round-robin
    #[arg(long, default_value_t = 10)]
    labels: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Execution mode shared by bench and tune.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Exact integer-time schedule, no threads
    Virtual,
    /// Real threads charging costs as busy waits
    Realtime,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Virtual => "virtual",
            Mode::Realtime => "realtime",
        }
    }
}

/// Cost-model flags shared by bench and tune.
#[derive(Args)]
struct CostArgs {
    /// Storage seek latency charged per cache miss
    #[arg(long, value_parser = parse_duration_arg, default_value = "100us")]
    miss_seek: Picos,
    /// Storage latency charged per byte on a cache miss
    #[arg(long, value_parser = parse_duration_arg, default_value = "100ns")]
    miss_per_byte: Picos,
    /// Memory latency charged per cache hit
    #[arg(long, value_parser = parse_duration_arg, default_value = "1us")]
    hit_seek: Picos,
    /// Memory latency charged per byte on a cache hit
    #[arg(long, value_parser = parse_duration_arg, default_value = "1ns")]
    hit_per_byte: Picos,
    /// Flat transform cost per item
    #[arg(long, value_parser = parse_duration_arg, default_value = "0")]
    transform_per_item: Picos,
    /// Transform cost per raw byte
    #[arg(long, value_parser = parse_duration_arg, default_value = "0")]
    transform_per_byte: Picos,
    /// Page-cache emulator capacity (suffixes B/KiB/MiB/GiB)
    #[arg(long, value_parser = parse_bytes_arg, default_value = "1GiB")]
    cache: u64,
    /// Time a sink is busy per delivered batch
    #[arg(long, value_parser = parse_duration_arg, default_value = "0")]
    drain: Picos,
    /// Per-delivered-batch payload budget
    #[arg(long, value_parser = parse_bytes_arg)]
    sink_budget: Option<u64>,
    /// Host in-flight memory budget
    #[arg(long, value_parser = parse_bytes_arg)]
    host_budget: Option<u64>,
}

impl CostArgs {
    fn latency(&self) -> LatencyModel {
        LatencyModel {
            miss_seek: self.miss_seek,
            miss_per_byte: self.miss_per_byte,
            hit_seek: self.hit_seek,
            hit_per_byte: self.hit_per_byte,
        }
    }

    fn transform(&self) -> TransformCost {
        TransformCost {
            per_item: self.transform_per_item,
            per_byte: self.transform_per_byte,
        }
    }
}

/// Run-shape flags shared by bench and tune.
#[derive(Args)]
struct SharedRunArgs {
    /// Path to a dataset directory or its manifest.jsonl
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Epochs to measure per configuration
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long, value_enum, default_value_t = Mode::Virtual)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep items in dataset order instead of reshuffling per epoch
    #[arg(long)]
    no_shuffle: bool,
    /// Drop a trailing partial batch
    #[arg(long)]
    drop_last: bool,
    /// Directory for run outputs; defaults to a fresh subdirectory of
    /// $DPT_RUN_DIR (or ./runs)
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    shared: SharedRunArgs,
    /// Worker count
    #[arg(long)]
    workers: usize,
    /// Prefetch factor (undelivered batches a worker may hold)
    #[arg(long)]
    prefetch: usize,
    /// Consumer (sink) count
    #[arg(long, default_value_t = 1)]
    sinks: usize,
    #[command(flatten)]
    costs: CostArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    shared: SharedRunArgs,
    /// Host CPU core count; bounds the worker grid
    #[arg(long)]
    cpus: usize,
    /// Consumer (sink) count; worker candidates are its multiples
    #[arg(long, default_value_t = 1)]
    gpus: usize,
    /// Largest prefetch factor to try
    #[arg(long, default_value_t = 4)]
    max_prefetch: usize,
    /// Overrides --cpus as the worker bound
    #[arg(long)]
    max_workers: Option<usize>,
    #[arg(long, value_parser = parse_objective_arg, default_value = "total")]
    objective: Objective,
    /// Let each trial inherit the previous trial's cache residency
    #[arg(long)]
    no_reset_cache: bool,
    #[command(flatten)]
    costs: CostArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory holding grid.csv (and optionally outcome.json)
    #[arg(long)]
    run: PathBuf,
}

/// Parses the process arguments, runs the command, and returns the exit
/// code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let item_bytes = match (args.item_bytes, args.resolution) {
        (Some(b), None) => b,
        (None, Some(r)) => {
            if r == 0 {
                return Err(Error::Usage("resolution must be positive".into()));
            }
            item_bytes_for_resolution(r)
        }
        // Clap enforces exactly one of the two flags.
        _ => unreachable!("flag constraints"),
    };
    let manifest = generate_dataset(&args.out, args.items, item_bytes, args.labels, args.seed)?;
    println!(
        "manifest={} items={} item_bytes={} total_bytes={} fingerprint={}",
        manifest.manifest_path().display(),
        manifest.item_count(),
        item_bytes,
        manifest.total_bytes(),
        manifest.spec_fingerprint()
    );
    Ok(())
}

/// Resolves the run directory: the explicit flag, or a fresh timestamped
/// subdirectory of $DPT_RUN_DIR (falling back to ./runs).
fn prepare_run_dir(explicit: Option<PathBuf>) -> Result<PathBuf> {
    let dir = match explicit {
        Some(dir) => dir,
        None => {
            let root = std::env::var_os("DPT_RUN_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            let stamp = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("clock before unix epoch")
                .as_nanos();
            root.join(format!("run-{stamp}-{}", std::process::id()))
        }
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

#[derive(Serialize)]
struct LatencySnapshot {
    miss_seek_ps: u64,
    miss_per_byte_ps: u64,
    hit_seek_ps: u64,
    hit_per_byte_ps: u64,
}

/// The resolved flags of a bench or tune invocation, recorded next to its
/// outputs. Durations are exact integer picoseconds.
#[derive(Serialize)]
struct ConfigSnapshot {
    command: &'static str,
    manifest: String,
    item_count: usize,
    max_item_bytes: u64,
    mode: &'static str,
    batch_size: usize,
    epochs: usize,
    seed: u64,
    shuffle: bool,
    drop_last: bool,
    num_sinks: usize,
    cache_capacity_bytes: u64,
    sink_budget_bytes: Option<u64>,
    host_budget_bytes: Option<u64>,
    drain_per_batch_ps: u64,
    latency: LatencySnapshot,
    transform_per_item_ps: u64,
    transform_per_byte_ps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prefetch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cpu_cores: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_prefetch: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_workers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reset_cache_between_trials: Option<bool>,
}

impl ConfigSnapshot {
    fn base(
        command: &'static str,
        shared: &SharedRunArgs,
        costs: &CostArgs,
        manifest: &Manifest,
        num_sinks: usize,
    ) -> ConfigSnapshot {
        ConfigSnapshot {
            command,
            manifest: shared.manifest.display().to_string(),
            item_count: manifest.item_count(),
            max_item_bytes: manifest.max_item_bytes(),
            mode: shared.mode.as_str(),
            batch_size: shared.batch,
            epochs: shared.epochs,
            seed: shared.seed,
            shuffle: !shared.no_shuffle,
            drop_last: shared.drop_last,
            num_sinks,
            cache_capacity_bytes: costs.cache,
            sink_budget_bytes: costs.sink_budget,
            host_budget_bytes: costs.host_budget,
            drain_per_batch_ps: costs.drain.as_picos(),
            latency: LatencySnapshot {
                miss_seek_ps: costs.miss_seek.as_picos(),
                miss_per_byte_ps: costs.miss_per_byte.as_picos(),
                hit_seek_ps: costs.hit_seek.as_picos(),
                hit_per_byte_ps: costs.hit_per_byte.as_picos(),
            },
            transform_per_item_ps: costs.transform_per_item.as_picos(),
            transform_per_byte_ps: costs.transform_per_byte.as_picos(),
            workers: None,
            prefetch: None,
            cpu_cores: None,
            max_prefetch: None,
            max_workers: None,
            objective: None,
            reset_cache_between_trials: None,
        }
    }

    fn write(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join("config.json");
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let manifest = Manifest::load(&args.shared.manifest)?;
    let run_dir = prepare_run_dir(args.shared.run_dir.clone())?;
    let mut snapshot = ConfigSnapshot::base("bench", &args.shared, &args.costs, &manifest, args.sinks);
    snapshot.workers = Some(args.workers);
    snapshot.prefetch = Some(args.prefetch);
    snapshot.write(&run_dir)?;

    let grid_path = run_dir.join("grid.csv");
    if let Some(host_budget) = args.costs.host_budget {
        let estimate = estimate_memory(
            args.workers,
            args.prefetch,
            args.shared.batch,
            manifest.max_item_bytes(),
            args.costs.cache,
        );
        if check_overflow(estimate, host_budget) {
            let trial = TrialResult {
                n_worker: args.workers,
                n_prefetch: args.prefetch,
                status: TrialStatus::HostOverflow,
                epoch_times: Vec::new(),
                total_time: Picos::ZERO,
            };
            append_grid_csv(&grid_path, &grid_records_from_trial(&trial))?;
            println!("status=host_overflow estimate={estimate} budget={host_budget}");
            return Err(Error::HostOverflow {
                estimate,
                host_budget,
            });
        }
    }

    let config = LoaderConfig {
        num_workers: args.workers,
        prefetch_factor: args.prefetch,
        batch_size: args.shared.batch,
        shuffle: !args.shared.no_shuffle,
        seed: args.shared.seed,
        drop_last: args.shared.drop_last,
        transform: args.costs.transform(),
        latency: args.costs.latency(),
        realtime: args.shared.mode == Mode::Realtime,
    };
    let sinks = SinkConfig {
        num_sinks: args.sinks,
        drain_per_batch: args.costs.drain,
        sink_budget: args.costs.sink_budget.unwrap_or(u64::MAX),
    };
    let cache = Mutex::new(CacheEmulator::new(args.costs.cache));

    let mut epoch_times = Vec::with_capacity(args.shared.epochs);
    for epoch in 0..args.shared.epochs {
        match run_epoch(&config, &sinks, &manifest, &cache, epoch as u64) {
            Ok(report) => {
                println!(
                    "epoch={epoch} transfer_time={} batches={} cache_hits={} cache_misses={}",
                    report.transfer_time,
                    report.batch_count,
                    report.cache_hits,
                    report.cache_misses
                );
                epoch_times.push(report.transfer_time);
            }
            Err(e @ Error::SinkOverflow { .. }) => {
                let trial = TrialResult {
                    n_worker: args.workers,
                    n_prefetch: args.prefetch,
                    status: TrialStatus::SinkOverflow,
                    epoch_times,
                    total_time: Picos::ZERO,
                };
                append_grid_csv(&grid_path, &grid_records_from_trial(&trial))?;
                if let Error::SinkOverflow {
                    batch_seq,
                    payload_bytes,
                    sink_budget,
                } = &e
                {
                    println!(
                        "status=sink_overflow batch_seq={batch_seq} payload_bytes={payload_bytes} budget={sink_budget}"
                    );
                }
                return Err(e);
            }
            Err(other) => return Err(other),
        }
    }

    let total: Picos = epoch_times.iter().copied().sum();
    let trial = TrialResult {
        n_worker: args.workers,
        n_prefetch: args.prefetch,
        status: TrialStatus::Ok,
        epoch_times,
        total_time: total,
    };
    append_grid_csv(&grid_path, &grid_records_from_trial(&trial))?;
    println!("status=ok total={total} run_dir={}", run_dir.display());
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> Result<()> {
    let manifest = Manifest::load(&args.shared.manifest)?;
    let run_dir = prepare_run_dir(args.shared.run_dir.clone())?;
    let cfg = TuneConfig {
        cpu_cores: args.cpus,
        num_sinks: args.gpus,
        max_prefetch: args.max_prefetch,
        max_workers: args.max_workers,
        host_budget: args.costs.host_budget.unwrap_or(u64::MAX),
        sink_budget: args.costs.sink_budget.unwrap_or(u64::MAX),
        epochs_per_trial: args.shared.epochs,
        objective: args.objective,
        batch_size: args.shared.batch,
        shuffle: !args.shared.no_shuffle,
        seed: args.shared.seed,
        drop_last: args.shared.drop_last,
        transform: args.costs.transform(),
        latency: args.costs.latency(),
        drain_per_batch: args.costs.drain,
        realtime: args.shared.mode == Mode::Realtime,
        reset_cache_between_trials: !args.no_reset_cache,
    };

    let mut snapshot = ConfigSnapshot::base("tune", &args.shared, &args.costs, &manifest, args.gpus);
    snapshot.cpu_cores = Some(args.cpus);
    snapshot.max_prefetch = Some(args.max_prefetch);
    snapshot.max_workers = args.max_workers;
    snapshot.objective = Some(cfg.objective.to_string());
    snapshot.reset_cache_between_trials = Some(cfg.reset_cache_between_trials);
    snapshot.write(&run_dir)?;

    let log_path = run_dir.join("run.log");
    let log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let log = Mutex::new(log_file);
    let log_line = |line: String| {
        println!("{line}");
        let mut f = log.lock().expect("log lock poisoned");
        let _ = writeln!(f, "{line}");
    };

    let cache = Mutex::new(CacheEmulator::new(args.costs.cache));
    let searched = dpt_search_with(&cfg, &manifest, &cache, |event| match event {
        SearchEvent::Trial(t) => log_line(format!(
            "trial n_worker={} n_prefetch={} status={} total={} epochs={}",
            t.n_worker,
            t.n_prefetch,
            t.status,
            t.total_time,
            fmt_epoch_times(&t.epoch_times)
        )),
        SearchEvent::Pruned {
            n_worker,
            n_prefetch,
            estimate,
        } => log_line(format!(
            "pruned n_worker={n_worker} n_prefetch={n_prefetch} estimate={estimate} budget={}",
            cfg.host_budget
        )),
        SearchEvent::Baseline(t) => log_line(format!(
            "baseline n_worker={} n_prefetch={} status={} total={}",
            t.n_worker, t.n_prefetch, t.status, t.total_time
        )),
    });
    let outcome = match searched {
        Ok(outcome) => outcome,
        Err(e) => {
            log_line(format!("failed: {e}"));
            return Err(e);
        }
    };

    write_grid_csv(&run_dir.join("grid.csv"), &grid_records(&outcome))?;
    write_outcome_json(&run_dir.join("outcome.json"), &outcome)?;
    log_line(format!(
        "optimal n_worker={} n_prefetch={} objective={} value={}",
        outcome.n_worker, outcome.n_prefetch, outcome.objective, outcome.optimal_time
    ));
    println!("run_dir={}", run_dir.display());
    println!(
        "nWorker={} nPrefetch={} optimal_time={}",
        outcome.n_worker, outcome.n_prefetch, outcome.optimal_time
    );
    Ok(())
}

fn fmt_epoch_times(times: &[Picos]) -> String {
    if times.is_empty() {
        return "-".into();
    }
    times
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    if !args.run.is_dir() {
        return Err(Error::Usage(format!(
            "run directory {} not found",
            args.run.display()
        )));
    }
    let grid_path = args.run.join("grid.csv");
    if !grid_path.exists() {
        return Err(Error::Usage(format!(
            "{} has no grid.csv; not a run directory",
            args.run.display()
        )));
    }
    let mut records = read_grid_csv(&grid_path)?;

    // Prefer the recorded search outcome for the baseline cell; fall back
    // to the conventional (6, 2) when the grid happens to contain it.
    let outcome_path = args.run.join("outcome.json");
    let mut baseline_cell = None;
    if outcome_path.exists() {
        let outcome = read_outcome_json(&outcome_path)?;
        if let Some(baseline) = &outcome.baseline {
            baseline_cell = Some((baseline.n_worker, baseline.n_prefetch));
            let present = records
                .iter()
                .any(|r| r.n_worker == baseline.n_worker && r.n_prefetch == baseline.n_prefetch);
            if !present {
                records.extend(grid_records_from_trial(baseline));
            }
        }
    }
    if baseline_cell.is_none() {
        let has = |w: usize, p: usize| {
            records
                .iter()
                .any(|r: &GridRecord| r.n_worker == w && r.n_prefetch == p && r.status == TrialStatus::Ok)
        };
        if has(BASELINE_WORKERS, BASELINE_PREFETCH) {
            baseline_cell = Some((BASELINE_WORKERS, BASELINE_PREFETCH));
        }
    }

    let emitted = emit(&args.run, &records, baseline_cell)?;
    for group in &emitted.normalized.skipped_prefetch_groups {
        eprintln!("warning: prefetch group {group} has no completed cells; skipped in normalization");
    }
    print!("{}", summary_csv_text(&emitted.summary));
    println!(
        "normalized={} summary={}",
        emitted.normalized_path.display(),
        emitted.summary_path.display()
    );
    Ok(())
}
