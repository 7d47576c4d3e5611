//! Python bindings for the dpt loader and tuner. Durations cross the
//! boundary as float seconds; byte sizes as integers.

use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dpt_core::dataset::{self, CacheEmulator, LatencyModel, Manifest};
use dpt_core::loader::{self, EpochReport, LoaderConfig, SinkConfig};
use dpt_core::pipeline::TransformCost;
use dpt_core::report::{self, GridRecord};
use dpt_core::tuner::{self, TrialResult, TrialStatus, TuneConfig, TuneOutcome};
use dpt_core::{Error, Picos};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Usage(_) | Error::Format { .. } => PyValueError::new_err(e.to_string()),
        Error::Io { .. } | Error::DatasetIntegrity(_) => PyIOError::new_err(e.to_string()),
        Error::SinkOverflow { .. }
        | Error::HostOverflow { .. }
        | Error::NoFeasibleConfig { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Trial { .. } => PyRuntimeError::new_err(e.to_string()),
    }
}

fn secs(value: f64, what: &str) -> PyResult<Picos> {
    if !value.is_finite() || value < 0.0 {
        return Err(PyValueError::new_err(format!(
            "{what} must be a finite non-negative number of seconds, got {value}"
        )));
    }
    Ok(Picos::from_secs_f64(value))
}

/// Dataset manifest: item listing plus integrity metadata.
#[pyclass(name = "Manifest", frozen, module = "dpt_py")]
struct PyManifest {
    inner: Manifest,
}

#[pymethods]
impl PyManifest {
    /// Loads `manifest.jsonl` from a dataset directory or explicit path.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyManifest> {
        Ok(PyManifest {
            inner: Manifest::load(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn item_count(&self) -> usize {
        self.inner.item_count()
    }

    #[getter]
    fn total_bytes(&self) -> u64 {
        self.inner.total_bytes()
    }

    #[getter]
    fn max_item_bytes(&self) -> u64 {
        self.inner.max_item_bytes()
    }

    #[getter]
    fn fingerprint(&self) -> &str {
        self.inner.spec_fingerprint()
    }

    #[getter]
    fn root(&self) -> PathBuf {
        self.inner.root().to_path_buf()
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifest(items={}, total_bytes={})",
            self.inner.item_count(),
            self.inner.total_bytes()
        )
    }
}

/// Page-cache emulator with a byte budget and LRU eviction. Shared across
/// epochs so warm runs observe residency left by cold ones.
#[pyclass(name = "Cache", frozen, module = "dpt_py")]
struct PyCache {
    inner: Mutex<CacheEmulator>,
}

#[pymethods]
impl PyCache {
    #[new]
    fn new(capacity_bytes: u64) -> PyCache {
        PyCache {
            inner: Mutex::new(CacheEmulator::new(capacity_bytes)),
        }
    }

    /// Evicts everything and zeroes the hit and miss counters.
    fn reset(&self) {
        self.inner.lock().expect("cache lock poisoned").reset();
    }

    #[getter]
    fn capacity_bytes(&self) -> u64 {
        self.inner.lock().expect("cache lock poisoned").capacity()
    }

    #[getter]
    fn used_bytes(&self) -> u64 {
        self.inner.lock().expect("cache lock poisoned").used_bytes()
    }

    #[getter]
    fn hits(&self) -> u64 {
        self.inner.lock().expect("cache lock poisoned").hits()
    }

    #[getter]
    fn misses(&self) -> u64 {
        self.inner.lock().expect("cache lock poisoned").misses()
    }

    fn __repr__(&self) -> String {
        let guard = self.inner.lock().expect("cache lock poisoned");
        format!(
            "Cache(capacity={}, used={}, hits={}, misses={})",
            guard.capacity(),
            guard.used_bytes(),
            guard.hits(),
            guard.misses()
        )
    }
}

/// Timing and delivery facts for one measured epoch.
#[pyclass(name = "EpochReport", frozen, module = "dpt_py")]
struct PyEpochReport {
    inner: EpochReport,
}

#[pymethods]
impl PyEpochReport {
    /// Transfer time in seconds.
    #[getter]
    fn transfer_time(&self) -> f64 {
        self.inner.transfer_time.as_secs_f64()
    }

    #[getter]
    fn batch_count(&self) -> usize {
        self.inner.batch_count
    }

    #[getter]
    fn delivery_order(&self) -> Vec<u32> {
        self.inner.delivery_order.clone()
    }

    #[getter]
    fn per_worker_batches(&self) -> Vec<u64> {
        self.inner.per_worker_batches.clone()
    }

    #[getter]
    fn cache_hits(&self) -> u64 {
        self.inner.cache_hits
    }

    #[getter]
    fn cache_misses(&self) -> u64 {
        self.inner.cache_misses
    }

    /// SHA-256 over delivered payloads, hex encoded.
    #[getter]
    fn payload_digest(&self) -> String {
        self.inner.payload_digest_hex()
    }

    fn __repr__(&self) -> String {
        format!(
            "EpochReport(transfer_time={:.9}, batches={}, hits={}, misses={})",
            self.inner.transfer_time.as_secs_f64(),
            self.inner.batch_count,
            self.inner.cache_hits,
            self.inner.cache_misses
        )
    }
}

/// One measured grid cell.
#[pyclass(name = "Trial", frozen, module = "dpt_py")]
struct PyTrial {
    inner: TrialResult,
}

#[pymethods]
impl PyTrial {
    #[getter]
    fn n_worker(&self) -> usize {
        self.inner.n_worker
    }

    #[getter]
    fn n_prefetch(&self) -> usize {
        self.inner.n_prefetch
    }

    /// "ok", "host_overflow", or "sink_overflow".
    #[getter]
    fn status(&self) -> &'static str {
        self.inner.status.as_str()
    }

    /// Per-epoch transfer times in seconds.
    #[getter]
    fn epoch_times(&self) -> Vec<f64> {
        self.inner
            .epoch_times
            .iter()
            .map(|t| t.as_secs_f64())
            .collect()
    }

    #[getter]
    fn total_time(&self) -> f64 {
        self.inner.total_time.as_secs_f64()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trial(n_worker={}, n_prefetch={}, status={}, total_time={:.9})",
            self.inner.n_worker,
            self.inner.n_prefetch,
            self.inner.status,
            self.inner.total_time.as_secs_f64()
        )
    }
}

/// Grid-search result: the winning cell plus every measurement behind it.
#[pyclass(name = "TuneOutcome", frozen, module = "dpt_py")]
struct PyTuneOutcome {
    inner: TuneOutcome,
}

#[pymethods]
impl PyTuneOutcome {
    #[getter]
    fn n_worker(&self) -> usize {
        self.inner.n_worker
    }

    #[getter]
    fn n_prefetch(&self) -> usize {
        self.inner.n_prefetch
    }

    /// Objective value of the winning cell, in seconds.
    #[getter]
    fn optimal_time(&self) -> f64 {
        self.inner.optimal_time.as_secs_f64()
    }

    #[getter]
    fn objective(&self) -> &'static str {
        self.inner.objective.as_str()
    }

    #[getter]
    fn trials(&self) -> Vec<PyTrial> {
        self.inner
            .trials
            .iter()
            .map(|t| PyTrial { inner: t.clone() })
            .collect()
    }

    /// Cells skipped on the memory estimate, as (n_worker, n_prefetch).
    #[getter]
    fn pruned(&self) -> Vec<(usize, usize)> {
        self.inner.pruned.clone()
    }

    #[getter]
    fn baseline(&self) -> Option<PyTrial> {
        self.inner
            .baseline
            .as_ref()
            .map(|t| PyTrial { inner: t.clone() })
    }

    /// True when the baseline was measured outside the searched grid.
    #[getter]
    fn baseline_only(&self) -> bool {
        self.inner.baseline_only
    }

    fn __repr__(&self) -> String {
        format!(
            "TuneOutcome(n_worker={}, n_prefetch={}, optimal_time={:.9}, trials={})",
            self.inner.n_worker,
            self.inner.n_prefetch,
            self.inner.optimal_time.as_secs_f64(),
            self.inner.trials.len()
        )
    }
}

/// Generates a synthetic dataset and returns its manifest.
#[pyfunction]
#[pyo3(signature = (out_dir, items, item_bytes, labels = 10, seed = 0))]
fn generate_dataset(
    py: Python<'_>,
    out_dir: PathBuf,
    items: u32,
    item_bytes: u64,
    labels: u32,
    seed: u64,
) -> PyResult<PyManifest> {
    let inner = py
        .detach(|| dataset::generate_dataset(&out_dir, items, item_bytes, labels, seed))
        .map_err(py_err)?;
    Ok(PyManifest { inner })
}

/// Item size in bytes for a square RGB resolution.
#[pyfunction]
fn item_bytes_for_resolution(resolution: u32) -> u64 {
    dataset::item_bytes_for_resolution(resolution)
}

/// Transfer time in seconds for per-batch production costs given in
/// seconds, under the virtual schedule.
#[pyfunction]
#[pyo3(signature = (num_workers, prefetch_factor, num_sinks = 1, drain_per_batch = 0.0, produce_costs = Vec::new()))]
fn simulate_schedule(
    num_workers: usize,
    prefetch_factor: usize,
    num_sinks: usize,
    drain_per_batch: f64,
    produce_costs: Vec<f64>,
) -> PyResult<f64> {
    if num_workers == 0 || prefetch_factor == 0 || num_sinks == 0 {
        return Err(PyValueError::new_err(
            "workers, prefetch, and sinks must all be positive",
        ));
    }
    let drain = secs(drain_per_batch, "drain_per_batch")?;
    let costs = produce_costs
        .iter()
        .map(|&c| secs(c, "produce cost"))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(
        loader::simulate_schedule(num_workers, prefetch_factor, num_sinks, drain, &costs)
            .as_secs_f64(),
    )
}

fn latency_from(
    miss_seek: f64,
    miss_per_byte: f64,
    hit_seek: f64,
    hit_per_byte: f64,
) -> PyResult<LatencyModel> {
    Ok(LatencyModel {
        miss_seek: secs(miss_seek, "miss_seek")?,
        miss_per_byte: secs(miss_per_byte, "miss_per_byte")?,
        hit_seek: secs(hit_seek, "hit_seek")?,
        hit_per_byte: secs(hit_per_byte, "hit_per_byte")?,
    })
}

/// Runs one epoch and reports its timing. The cache carries state between
/// calls; pass `epoch` to advance the shuffle.
#[pyfunction]
#[pyo3(signature = (
    manifest, cache, num_workers, prefetch_factor, batch_size = 32, epoch = 0,
    num_sinks = 1, shuffle = true, seed = 0, drop_last = false, realtime = false,
    drain_per_batch = 0.0, sink_budget = None,
    miss_seek = 1e-4, miss_per_byte = 1e-7, hit_seek = 1e-6, hit_per_byte = 1e-9,
    transform_per_item = 0.0, transform_per_byte = 0.0,
))]
#[allow(clippy::too_many_arguments)]
fn run_epoch(
    py: Python<'_>,
    manifest: &PyManifest,
    cache: &PyCache,
    num_workers: usize,
    prefetch_factor: usize,
    batch_size: usize,
    epoch: u64,
    num_sinks: usize,
    shuffle: bool,
    seed: u64,
    drop_last: bool,
    realtime: bool,
    drain_per_batch: f64,
    sink_budget: Option<u64>,
    miss_seek: f64,
    miss_per_byte: f64,
    hit_seek: f64,
    hit_per_byte: f64,
    transform_per_item: f64,
    transform_per_byte: f64,
) -> PyResult<PyEpochReport> {
    let config = LoaderConfig {
        num_workers,
        prefetch_factor,
        batch_size,
        shuffle,
        seed,
        drop_last,
        transform: TransformCost {
            per_item: secs(transform_per_item, "transform_per_item")?,
            per_byte: secs(transform_per_byte, "transform_per_byte")?,
        },
        latency: latency_from(miss_seek, miss_per_byte, hit_seek, hit_per_byte)?,
        realtime,
    };
    let sinks = SinkConfig {
        num_sinks,
        drain_per_batch: secs(drain_per_batch, "drain_per_batch")?,
        sink_budget: sink_budget.unwrap_or(u64::MAX),
    };
    let inner = py
        .detach(|| loader::run_epoch(&config, &sinks, &manifest.inner, &cache.inner, epoch))
        .map_err(py_err)?;
    Ok(PyEpochReport { inner })
}

/// Grid-searches (num_workers, prefetch_factor) and returns the outcome.
#[pyfunction]
#[pyo3(signature = (
    manifest, cpu_cores, num_sinks = 1, max_prefetch = 4, max_workers = None,
    epochs_per_trial = 2, objective = "total", batch_size = 32, shuffle = true,
    seed = 0, drop_last = false, realtime = false, cache_bytes = 1 << 30,
    sink_budget = None, host_budget = None, drain_per_batch = 0.0,
    miss_seek = 1e-4, miss_per_byte = 1e-7, hit_seek = 1e-6, hit_per_byte = 1e-9,
    transform_per_item = 0.0, transform_per_byte = 0.0, reset_cache = true,
))]
#[allow(clippy::too_many_arguments)]
fn dpt_search(
    py: Python<'_>,
    manifest: &PyManifest,
    cpu_cores: usize,
    num_sinks: usize,
    max_prefetch: usize,
    max_workers: Option<usize>,
    epochs_per_trial: usize,
    objective: &str,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    drop_last: bool,
    realtime: bool,
    cache_bytes: u64,
    sink_budget: Option<u64>,
    host_budget: Option<u64>,
    drain_per_batch: f64,
    miss_seek: f64,
    miss_per_byte: f64,
    hit_seek: f64,
    hit_per_byte: f64,
    transform_per_item: f64,
    transform_per_byte: f64,
    reset_cache: bool,
) -> PyResult<PyTuneOutcome> {
    let cfg = TuneConfig {
        cpu_cores,
        num_sinks,
        max_prefetch,
        max_workers,
        host_budget: host_budget.unwrap_or(u64::MAX),
        sink_budget: sink_budget.unwrap_or(u64::MAX),
        epochs_per_trial,
        objective: objective.parse().map_err(py_err)?,
        batch_size,
        shuffle,
        seed,
        drop_last,
        transform: TransformCost {
            per_item: secs(transform_per_item, "transform_per_item")?,
            per_byte: secs(transform_per_byte, "transform_per_byte")?,
        },
        latency: latency_from(miss_seek, miss_per_byte, hit_seek, hit_per_byte)?,
        drain_per_batch: secs(drain_per_batch, "drain_per_batch")?,
        realtime,
        reset_cache_between_trials: reset_cache,
    };
    let cache = Mutex::new(CacheEmulator::new(cache_bytes));
    let inner = py
        .detach(|| tuner::dpt_search(&cfg, &manifest.inner, &cache))
        .map_err(py_err)?;
    Ok(PyTuneOutcome { inner })
}

/// Percent change of the tuned time against the baseline; negative is an
/// improvement.
#[pyfunction]
fn time_gain(optimal_secs: f64, baseline_secs: f64) -> PyResult<f64> {
    report::time_gain(optimal_secs, baseline_secs).map_err(py_err)
}

/// Baseline time divided by tuned time.
#[pyfunction]
fn speedup(baseline_secs: f64, optimal_secs: f64) -> PyResult<f64> {
    report::speedup(baseline_secs, optimal_secs).map_err(py_err)
}

/// Normalizes (n_worker, n_prefetch, epoch, transfer_secs) rows by the
/// largest time sharing each prefetch factor; returns rows with the time
/// replaced by its ratio in (0, 1].
#[pyfunction]
fn normalize_by_prefetch(
    rows: Vec<(usize, usize, usize, f64)>,
) -> PyResult<Vec<(usize, usize, usize, f64)>> {
    let records = rows
        .iter()
        .map(|&(n_worker, n_prefetch, epoch_index, time_s)| {
            Ok(GridRecord {
                n_worker,
                n_prefetch,
                epoch_index,
                transfer_time: secs(time_s, "transfer time")?,
                status: TrialStatus::Ok,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(report::normalize_by_prefetch(&records)
        .records
        .into_iter()
        .map(|r| (r.n_worker, r.n_prefetch, r.epoch_index, r.ratio))
        .collect())
}

#[pymodule]
fn dpt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyManifest>()?;
    m.add_class::<PyCache>()?;
    m.add_class::<PyEpochReport>()?;
    m.add_class::<PyTrial>()?;
    m.add_class::<PyTuneOutcome>()?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(item_bytes_for_resolution, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run_epoch, m)?)?;
    m.add_function(wrap_pyfunction!(dpt_search, m)?)?;
    m.add_function(wrap_pyfunction!(time_gain, m)?)?;
    m.add_function(wrap_pyfunction!(speedup, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_by_prefetch, m)?)?;
    Ok(())
}
