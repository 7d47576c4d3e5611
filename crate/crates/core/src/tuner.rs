//! Grid search over (num_workers, prefetch_factor) minimizing epoch
//! transfer time.
//!
//! Worker counts are stepped in multiples of the sink count up to a worker
//! bound (the CPU core count unless overridden); prefetch factors are swept
//! from 1 upward. The in-flight memory footprint of each cell is estimated
//! before it runs. Because the estimate is monotone in the prefetch factor,
//! the first overflowing factor prunes the rest of its row without running
//! them. The best feasible cell is the one with the strictly smallest
//! objective; earlier cells win ties, so cheaper configurations are
//! preferred when equal.

use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::{CacheEmulator, LatencyModel, Manifest};
use crate::error::{Error, Result};
use crate::loader::{run_epoch, LoaderConfig, SinkConfig};
use crate::pipeline::TransformCost;
use crate::units::Picos;

/// Reference configuration many dataloaders ship as their default.
pub const BASELINE_WORKERS: usize = 6;
pub const BASELINE_PREFETCH: usize = 2;

/// What a trial minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of all epoch transfer times.
    #[default]
    Total,
    /// The cold first epoch only.
    FirstEpoch,
    /// Mean of every epoch after the first (needs at least two epochs).
    SteadyState,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Total => "total",
            Objective::FirstEpoch => "first_epoch",
            Objective::SteadyState => "steady_state",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Objective> {
        match s {
            "total" => Ok(Objective::Total),
            "first_epoch" => Ok(Objective::FirstEpoch),
            "steady_state" => Ok(Objective::SteadyState),
            _ => Err(Error::Usage(format!(
                "unknown objective {s:?}, expected total, first_epoch or steady_state"
            ))),
        }
    }
}

/// Outcome status of one measured grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    HostOverflow,
    SinkOverflow,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::HostOverflow => "host_overflow",
            TrialStatus::SinkOverflow => "sink_overflow",
        }
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrialStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<TrialStatus> {
        match s {
            "ok" => Ok(TrialStatus::Ok),
            "host_overflow" => Ok(TrialStatus::HostOverflow),
            "sink_overflow" => Ok(TrialStatus::SinkOverflow),
            _ => Err(Error::Usage(format!("unknown trial status {s:?}"))),
        }
    }
}

/// Search-space and measurement parameters for one tuning run.
#[derive(Clone, Debug)]
pub struct TuneConfig {
    /// Host CPU core count; the default worker bound.
    pub cpu_cores: usize,
    /// Consumer count. Worker candidates are multiples of this.
    pub num_sinks: usize,
    /// Largest prefetch factor to try.
    pub max_prefetch: usize,
    /// Overrides `cpu_cores` as the worker bound when set.
    pub max_workers: Option<usize>,
    /// In-flight memory budget for workers plus cache, in bytes.
    pub host_budget: u64,
    /// Per-delivered-batch payload budget, in bytes.
    pub sink_budget: u64,
    pub epochs_per_trial: usize,
    pub objective: Objective,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub drop_last: bool,
    pub transform: TransformCost,
    pub latency: LatencyModel,
    pub drain_per_batch: Picos,
    pub realtime: bool,
    /// Start every trial with a cold cache. Disabling lets each trial
    /// inherit the residency the previous one left behind.
    pub reset_cache_between_trials: bool,
}

impl TuneConfig {
    pub fn new(cpu_cores: usize, num_sinks: usize, max_prefetch: usize) -> TuneConfig {
        TuneConfig {
            cpu_cores,
            num_sinks,
            max_prefetch,
            max_workers: None,
            host_budget: u64::MAX,
            sink_budget: u64::MAX,
            epochs_per_trial: 2,
            objective: Objective::Total,
            batch_size: 32,
            shuffle: true,
            seed: 0,
            drop_last: false,
            transform: TransformCost::zero(),
            latency: LatencyModel::default(),
            drain_per_batch: Picos::ZERO,
            realtime: false,
            reset_cache_between_trials: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sinks == 0 {
            return Err(Error::Usage("num_sinks must be positive".into()));
        }
        if self.cpu_cores < self.num_sinks {
            return Err(Error::Usage(
                "cpu core count must be at least the sink count".into(),
            ));
        }
        if self.max_prefetch == 0 {
            return Err(Error::Usage("max_prefetch must be positive".into()));
        }
        if self.epochs_per_trial == 0 {
            return Err(Error::Usage("epochs_per_trial must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch_size must be positive".into()));
        }
        if self.effective_max_workers() < self.num_sinks {
            return Err(Error::Usage(
                "max_workers below the sink count leaves no worker candidates".into(),
            ));
        }
        if self.objective == Objective::SteadyState && self.epochs_per_trial < 2 {
            return Err(Error::Usage(
                "steady_state objective needs at least two epochs per trial".into(),
            ));
        }
        self.latency.validate()
    }

    pub fn effective_max_workers(&self) -> usize {
        self.max_workers.unwrap_or(self.cpu_cores)
    }

    /// Candidate worker counts: G, 2G, ... up to the worker bound.
    pub fn worker_values(&self) -> Vec<usize> {
        let bound = self.effective_max_workers();
        (1..)
            .map(|k| k * self.num_sinks)
            .take_while(|w| *w <= bound)
            .collect()
    }

    fn loader_config(&self, n_worker: usize, n_prefetch: usize) -> LoaderConfig {
        LoaderConfig {
            num_workers: n_worker,
            prefetch_factor: n_prefetch,
            batch_size: self.batch_size,
            shuffle: self.shuffle,
            seed: self.seed,
            drop_last: self.drop_last,
            transform: self.transform,
            latency: self.latency,
            realtime: self.realtime,
        }
    }

    fn sink_config(&self) -> SinkConfig {
        SinkConfig {
            num_sinks: self.num_sinks,
            drain_per_batch: self.drain_per_batch,
            sink_budget: self.sink_budget,
        }
    }
}

/// Estimated peak in-flight bytes: every worker may hold `prefetch_factor`
/// undelivered batches of worst-case items, on top of the cache budget.
pub fn estimate_memory(
    num_workers: usize,
    prefetch_factor: usize,
    batch_size: usize,
    max_item_bytes: u64,
    cache_capacity: u64,
) -> u64 {
    let batches = (num_workers as u128 * prefetch_factor as u128).saturating_mul(batch_size as u128);
    let total = batches
        .saturating_mul(max_item_bytes as u128)
        .saturating_add(cache_capacity as u128);
    u64::try_from(total).unwrap_or(u64::MAX)
}

/// An estimate strictly above the budget overflows; exactly at budget fits.
pub fn check_overflow(estimate: u64, host_budget: u64) -> bool {
    estimate > host_budget
}

/// One measured (or rejected) grid cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialResult {
    pub n_worker: usize,
    pub n_prefetch: usize,
    pub status: TrialStatus,
    /// Transfer time of each completed epoch. Empty for host overflows,
    /// partial when a sink overflow stopped the trial.
    pub epoch_times: Vec<Picos>,
    /// Sum of epoch times; zero unless the trial completed.
    pub total_time: Picos,
}

/// Runs every epoch of one grid cell.
///
/// Overflows are part of the result, not errors: a cell whose estimated
/// footprint busts the host budget reports `host_overflow` without running,
/// and a cell stopped by a batch over the sink budget reports
/// `sink_overflow` with the epochs that did complete. Any other loader
/// error propagates, tagged with the cell coordinates.
pub fn run_trial(
    n_worker: usize,
    n_prefetch: usize,
    cfg: &TuneConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
) -> Result<TrialResult> {
    let in_trial = |e: Error| Error::Trial {
        n_worker,
        n_prefetch,
        source: Box::new(e),
    };
    let cache_capacity = {
        let mut guard = cache.lock().expect("cache lock poisoned");
        if cfg.reset_cache_between_trials {
            guard.reset();
        }
        guard.capacity()
    };
    let estimate = estimate_memory(
        n_worker,
        n_prefetch,
        cfg.batch_size,
        manifest.max_item_bytes(),
        cache_capacity,
    );
    if check_overflow(estimate, cfg.host_budget) {
        return Ok(TrialResult {
            n_worker,
            n_prefetch,
            status: TrialStatus::HostOverflow,
            epoch_times: Vec::new(),
            total_time: Picos::ZERO,
        });
    }

    let loader_cfg = cfg.loader_config(n_worker, n_prefetch);
    let sink_cfg = cfg.sink_config();
    let mut epoch_times = Vec::with_capacity(cfg.epochs_per_trial);
    for epoch in 0..cfg.epochs_per_trial {
        match run_epoch(&loader_cfg, &sink_cfg, manifest, cache, epoch as u64) {
            Ok(report) => epoch_times.push(report.transfer_time),
            Err(Error::SinkOverflow { .. }) => {
                return Ok(TrialResult {
                    n_worker,
                    n_prefetch,
                    status: TrialStatus::SinkOverflow,
                    epoch_times,
                    total_time: Picos::ZERO,
                });
            }
            Err(other) => return Err(in_trial(other)),
        }
    }
    let total_time = epoch_times.iter().copied().sum();
    Ok(TrialResult {
        n_worker,
        n_prefetch,
        status: TrialStatus::Ok,
        epoch_times,
        total_time,
    })
}

/// The value a trial is judged by. Only defined for completed trials.
pub fn objective_value(trial: &TrialResult, objective: Objective) -> Result<Picos> {
    if trial.status != TrialStatus::Ok {
        return Err(Error::Usage(format!(
            "objective undefined for a {} trial",
            trial.status
        )));
    }
    match objective {
        Objective::Total => Ok(trial.total_time),
        Objective::FirstEpoch => trial
            .epoch_times
            .first()
            .copied()
            .ok_or_else(|| Error::Usage("trial has no epochs".into())),
        Objective::SteadyState => {
            if trial.epoch_times.len() < 2 {
                return Err(Error::Usage(
                    "steady_state objective needs at least two epochs".into(),
                ));
            }
            let tail = &trial.epoch_times[1..];
            // Integer mean, rounding down.
            Ok(tail.iter().copied().sum::<Picos>() / tail.len() as u64)
        }
    }
}

/// Progress notifications emitted during a search.
pub enum SearchEvent<'a> {
    Trial(&'a TrialResult),
    /// A cell skipped because its memory estimate busts the host budget.
    Pruned {
        n_worker: usize,
        n_prefetch: usize,
        estimate: u64,
    },
    /// The baseline cell, whether reused from the grid or run separately.
    Baseline(&'a TrialResult),
}

/// Result of a full grid search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuneOutcome {
    /// Best feasible cell.
    pub n_worker: usize,
    pub n_prefetch: usize,
    /// Objective value of the best cell.
    pub optimal_time: Picos,
    pub objective: Objective,
    /// Every cell that ran, in search order.
    pub trials: Vec<TrialResult>,
    /// Cells skipped on the memory estimate, in search order.
    pub pruned: Vec<(usize, usize)>,
    /// The reference cell (6 workers, prefetch 2), when it fits the search
    /// bounds. Reused from the grid when the grid contains it; otherwise
    /// measured separately and flagged via `baseline_only`.
    pub baseline: Option<TrialResult>,
    /// True when the baseline was measured outside the searched grid.
    pub baseline_only: bool,
}

/// Grid search minimizing the objective over (num_workers, prefetch_factor).
pub fn dpt_search(
    cfg: &TuneConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
) -> Result<TuneOutcome> {
    dpt_search_with(cfg, manifest, cache, |_| {})
}

/// [`dpt_search`] with a progress callback for logging.
pub fn dpt_search_with(
    cfg: &TuneConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
    mut on_event: impl FnMut(SearchEvent<'_>),
) -> Result<TuneOutcome> {
    cfg.validate()?;
    let max_item_bytes = manifest.max_item_bytes();
    let cache_capacity = cache.lock().expect("cache lock poisoned").capacity();

    let mut trials: Vec<TrialResult> = Vec::new();
    let mut pruned: Vec<(usize, usize)> = Vec::new();
    let mut best: Option<(usize, Picos)> = None;

    for n_worker in cfg.worker_values() {
        for n_prefetch in 1..=cfg.max_prefetch {
            let estimate = estimate_memory(
                n_worker,
                n_prefetch,
                cfg.batch_size,
                max_item_bytes,
                cache_capacity,
            );
            if check_overflow(estimate, cfg.host_budget) {
                // The estimate grows with the prefetch factor, so the rest
                // of this worker row overflows too.
                for p in n_prefetch..=cfg.max_prefetch {
                    let estimate = estimate_memory(
                        n_worker,
                        p,
                        cfg.batch_size,
                        max_item_bytes,
                        cache_capacity,
                    );
                    on_event(SearchEvent::Pruned {
                        n_worker,
                        n_prefetch: p,
                        estimate,
                    });
                    pruned.push((n_worker, p));
                }
                break;
            }
            let trial = run_trial(n_worker, n_prefetch, cfg, manifest, cache)?;
            on_event(SearchEvent::Trial(&trial));
            if trial.status == TrialStatus::Ok {
                let value = objective_value(&trial, cfg.objective)?;
                if best.is_none_or(|(_, incumbent)| value < incumbent) {
                    best = Some((trials.len(), value));
                }
            }
            trials.push(trial);
        }
    }

    let in_bounds = BASELINE_WORKERS <= cfg.effective_max_workers()
        && BASELINE_PREFETCH <= cfg.max_prefetch;
    let mut baseline_only = false;
    let baseline = if in_bounds {
        let found = trials
            .iter()
            .find(|t| t.n_worker == BASELINE_WORKERS && t.n_prefetch == BASELINE_PREFETCH)
            .cloned();
        match found {
            Some(t) => {
                on_event(SearchEvent::Baseline(&t));
                Some(t)
            }
            None => {
                baseline_only = true;
                let t = run_trial(BASELINE_WORKERS, BASELINE_PREFETCH, cfg, manifest, cache)?;
                on_event(SearchEvent::Baseline(&t));
                Some(t)
            }
        }
    } else {
        None
    };

    let attempted = trials.len() + pruned.len();
    let Some((best_idx, optimal_time)) = best else {
        return Err(Error::NoFeasibleConfig { attempted });
    };
    Ok(TuneOutcome {
        n_worker: trials[best_idx].n_worker,
        n_prefetch: trials[best_idx].n_prefetch,
        optimal_time,
        objective: cfg.objective,
        trials,
        pruned,
        baseline,
        baseline_only,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_dataset;

    fn quiet_latency() -> LatencyModel {
        LatencyModel {
            miss_seek: Picos::from_micros(100),
            miss_per_byte: Picos::from_nanos(50),
            hit_seek: Picos::from_micros(1),
            hit_per_byte: Picos::from_nanos(1),
        }
    }

    #[test]
    fn test_estimate_memory_formula() {
        assert_eq!(estimate_memory(10, 4, 32, 3072, 0), 3_932_160);
        assert_eq!(estimate_memory(1, 1, 1, 1, 7), 8);
        assert_eq!(estimate_memory(u32::MAX as usize, 1 << 30, 1 << 30, u64::MAX, 0), u64::MAX);
    }

    #[test]
    fn test_check_overflow_is_strict() {
        assert!(!check_overflow(100, 100));
        assert!(check_overflow(101, 100));
        assert!(!check_overflow(0, 0));
    }

    #[test]
    fn test_worker_values_are_sink_multiples() {
        let mut cfg = TuneConfig::new(12, 4, 4);
        assert_eq!(cfg.worker_values(), vec![4, 8, 12]);
        cfg = TuneConfig::new(4, 1, 2);
        assert_eq!(cfg.worker_values(), vec![1, 2, 3, 4]);
        cfg = TuneConfig::new(16, 3, 2);
        cfg.max_workers = Some(7);
        assert_eq!(cfg.worker_values(), vec![3, 6]);
    }

    #[test]
    fn test_validate_rejects_bad_shapes() {
        assert!(TuneConfig::new(2, 4, 1).validate().is_err());
        assert!(TuneConfig::new(4, 0, 1).validate().is_err());
        assert!(TuneConfig::new(4, 2, 0).validate().is_err());
        let mut cfg = TuneConfig::new(8, 4, 1);
        cfg.max_workers = Some(3);
        assert!(cfg.validate().is_err());
        let mut cfg = TuneConfig::new(4, 1, 2);
        cfg.objective = Objective::SteadyState;
        cfg.epochs_per_trial = 1;
        assert!(cfg.validate().is_err());
        cfg.epochs_per_trial = 2;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn test_objective_parsing() {
        assert_eq!("total".parse::<Objective>().unwrap(), Objective::Total);
        assert_eq!("first_epoch".parse::<Objective>().unwrap(), Objective::FirstEpoch);
        assert_eq!("steady_state".parse::<Objective>().unwrap(), Objective::SteadyState);
        assert!("fastest".parse::<Objective>().is_err());
        assert_eq!(Objective::SteadyState.to_string(), "steady_state");
    }

    #[test]
    fn test_run_trial_cold_then_warm_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 16, 128, 2, 3).unwrap();
        // The whole dataset fits the cache, so epochs after the first are
        // uniformly warm.
        let cache = Mutex::new(CacheEmulator::new(1 << 20));
        let mut cfg = TuneConfig::new(1, 1, 1);
        cfg.epochs_per_trial = 3;
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let trial = run_trial(1, 1, &cfg, &manifest, &cache).unwrap();
        assert_eq!(trial.status, TrialStatus::Ok);
        assert_eq!(trial.epoch_times.len(), 3);
        assert!(trial.epoch_times[0] > trial.epoch_times[1]);
        assert_eq!(trial.epoch_times[1], trial.epoch_times[2]);
        assert_eq!(trial.total_time, trial.epoch_times.iter().copied().sum());
    }

    #[test]
    fn test_run_trial_host_overflow_runs_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 8, 128, 2, 3).unwrap();
        let cache = Mutex::new(CacheEmulator::new(0));
        let mut cfg = TuneConfig::new(4, 1, 2);
        cfg.batch_size = 4;
        cfg.host_budget = 100;
        let trial = run_trial(4, 2, &cfg, &manifest, &cache).unwrap();
        assert_eq!(trial.status, TrialStatus::HostOverflow);
        assert!(trial.epoch_times.is_empty());
        assert_eq!(trial.total_time, Picos::ZERO);
    }

    #[test]
    fn test_run_trial_sink_overflow_stops_the_trial() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 8, 128, 2, 3).unwrap();
        let cache = Mutex::new(CacheEmulator::new(0));
        let mut cfg = TuneConfig::new(2, 1, 1);
        cfg.batch_size = 4;
        cfg.sink_budget = 100;
        let trial = run_trial(2, 1, &cfg, &manifest, &cache).unwrap();
        assert_eq!(trial.status, TrialStatus::SinkOverflow);
        assert!(trial.epoch_times.is_empty());
    }

    #[test]
    fn test_run_trial_reset_controls_cache_carryover() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 8, 64, 2, 1).unwrap();
        let cache = Mutex::new(CacheEmulator::new(1 << 20));
        let mut cfg = TuneConfig::new(1, 1, 1);
        cfg.epochs_per_trial = 1;
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let cold = run_trial(1, 1, &cfg, &manifest, &cache).unwrap();
        // Without reset the second trial rides on the first one's warm cache.
        cfg.reset_cache_between_trials = false;
        let warm = run_trial(1, 1, &cfg, &manifest, &cache).unwrap();
        assert!(warm.total_time < cold.total_time);
        cfg.reset_cache_between_trials = true;
        let cold_again = run_trial(1, 1, &cfg, &manifest, &cache).unwrap();
        assert_eq!(cold_again.total_time, cold.total_time);
    }

    fn brute_force_best(
        cfg: &TuneConfig,
        manifest: &Manifest,
        cache: &Mutex<CacheEmulator>,
    ) -> (usize, usize, Picos) {
        let mut best: Option<(usize, usize, Picos)> = None;
        for n_worker in cfg.worker_values() {
            for n_prefetch in 1..=cfg.max_prefetch {
                let trial = run_trial(n_worker, n_prefetch, cfg, manifest, cache).unwrap();
                if trial.status != TrialStatus::Ok {
                    continue;
                }
                let value = objective_value(&trial, cfg.objective).unwrap();
                if best.is_none_or(|(_, _, b)| value < b) {
                    best = Some((n_worker, n_prefetch, value));
                }
            }
        }
        best.expect("at least one feasible cell")
    }

    #[test]
    fn test_search_matches_brute_force() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 32, 64, 2, 11).unwrap();
        let mut cfg = TuneConfig::new(4, 1, 2);
        cfg.batch_size = 4;
        cfg.seed = 5;
        cfg.latency = quiet_latency();
        cfg.drain_per_batch = Picos::from_micros(300);

        let cache = Mutex::new(CacheEmulator::new(1024));
        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        assert_eq!(outcome.trials.len(), 8);
        assert!(outcome.pruned.is_empty());

        let cache = Mutex::new(CacheEmulator::new(1024));
        let (bw, bp, bt) = brute_force_best(&cfg, &manifest, &cache);
        assert_eq!((outcome.n_worker, outcome.n_prefetch, outcome.optimal_time), (bw, bp, bt));
    }

    #[test]
    fn test_search_prunes_overflowing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 16, 64, 2, 2).unwrap();
        let cache = Mutex::new(CacheEmulator::new(0));
        let mut cfg = TuneConfig::new(4, 1, 2);
        cfg.batch_size = 2;
        cfg.latency = quiet_latency();
        // Admits j=1 at the full worker count but nothing past a 4x footprint.
        cfg.host_budget = estimate_memory(4, 1, 2, 64, 0) + 2;

        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        let cells: Vec<(usize, usize)> = outcome
            .trials
            .iter()
            .map(|t| (t.n_worker, t.n_prefetch))
            .collect();
        assert_eq!(cells, vec![(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (4, 1)]);
        assert_eq!(outcome.pruned, vec![(3, 2), (4, 2)]);
        assert!(outcome.trials.iter().all(|t| t.status == TrialStatus::Ok));
    }

    #[test]
    fn test_search_with_no_feasible_cell() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 4, 64, 2, 2).unwrap();
        let cache = Mutex::new(CacheEmulator::new(0));
        let mut cfg = TuneConfig::new(2, 1, 3);
        cfg.host_budget = 0;
        match dpt_search(&cfg, &manifest, &cache) {
            Err(Error::NoFeasibleConfig { attempted }) => assert_eq!(attempted, 6),
            other => panic!("expected no feasible config, got {other:?}"),
        }
    }

    #[test]
    fn test_search_reuses_in_grid_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 24, 64, 2, 4).unwrap();
        let cache = Mutex::new(CacheEmulator::new(2048));
        let mut cfg = TuneConfig::new(6, 1, 2);
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        let baseline = outcome.baseline.as_ref().unwrap();
        assert!(!outcome.baseline_only);
        assert_eq!((baseline.n_worker, baseline.n_prefetch), (6, 2));
        let from_grid = outcome
            .trials
            .iter()
            .find(|t| t.n_worker == 6 && t.n_prefetch == 2)
            .unwrap();
        assert_eq!(baseline, from_grid);
        // The baseline is a candidate, so the winner can never lose to it.
        assert!(outcome.optimal_time <= objective_value(baseline, cfg.objective).unwrap());
    }

    #[test]
    fn test_search_runs_out_of_grid_baseline() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 16, 64, 2, 4).unwrap();
        let cache = Mutex::new(CacheEmulator::new(2048));
        let mut cfg = TuneConfig::new(8, 4, 2);
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        let grid: Vec<usize> = outcome.trials.iter().map(|t| t.n_worker).collect();
        assert!(!grid.contains(&6));
        let baseline = outcome.baseline.as_ref().unwrap();
        assert!(outcome.baseline_only);
        assert_eq!((baseline.n_worker, baseline.n_prefetch), (6, 2));
        assert_eq!(baseline.status, TrialStatus::Ok);
    }

    #[test]
    fn test_search_skips_baseline_outside_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 16, 64, 2, 4).unwrap();
        let cache = Mutex::new(CacheEmulator::new(2048));
        let mut cfg = TuneConfig::new(4, 1, 2);
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        assert!(outcome.baseline.is_none());
        assert!(!outcome.baseline_only);
    }

    #[test]
    fn test_search_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 20, 32, 2, 9).unwrap();
        let mut cfg = TuneConfig::new(4, 2, 2);
        cfg.batch_size = 4;
        cfg.latency = quiet_latency();
        let run = || {
            let cache = Mutex::new(CacheEmulator::new(512));
            dpt_search(&cfg, &manifest, &cache).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn test_objective_value_variants() {
        let trial = TrialResult {
            n_worker: 2,
            n_prefetch: 1,
            status: TrialStatus::Ok,
            epoch_times: vec![Picos::from_secs(5), Picos::from_secs(2), Picos::from_secs(3)],
            total_time: Picos::from_secs(10),
        };
        assert_eq!(objective_value(&trial, Objective::Total).unwrap(), Picos::from_secs(10));
        assert_eq!(objective_value(&trial, Objective::FirstEpoch).unwrap(), Picos::from_secs(5));
        assert_eq!(
            objective_value(&trial, Objective::SteadyState).unwrap(),
            Picos::from_millis(2_500)
        );
        let failed = TrialResult {
            status: TrialStatus::HostOverflow,
            epoch_times: Vec::new(),
            total_time: Picos::ZERO,
            ..trial
        };
        assert!(objective_value(&failed, Objective::Total).is_err());
    }

    #[test]
    fn test_search_events_stream_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(dir.path(), 8, 64, 2, 2).unwrap();
        let cache = Mutex::new(CacheEmulator::new(0));
        let mut cfg = TuneConfig::new(2, 1, 2);
        cfg.batch_size = 2;
        cfg.latency = quiet_latency();
        cfg.host_budget = estimate_memory(2, 1, 2, 64, 0);
        let mut log = Vec::new();
        let outcome = dpt_search_with(&cfg, &manifest, &cache, |ev| {
            log.push(match ev {
                SearchEvent::Trial(t) => format!("trial {} {}", t.n_worker, t.n_prefetch),
                SearchEvent::Pruned { n_worker, n_prefetch, .. } => {
                    format!("pruned {n_worker} {n_prefetch}")
                }
                SearchEvent::Baseline(t) => format!("baseline {} {}", t.n_worker, t.n_prefetch),
            });
        })
        .unwrap();
        assert_eq!(log, vec!["trial 1 1", "trial 1 2", "trial 2 1", "pruned 2 2"]);
        // Two workers halve the uniform-cost epoch, so (2, 1) wins.
        assert_eq!((outcome.n_worker, outcome.n_prefetch), (2, 1));
    }
}
