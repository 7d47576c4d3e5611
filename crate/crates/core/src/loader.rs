//! Parallel prefetching batch loader over a manifest-described dataset.
//!
//! Batches are assigned to workers round-robin by sequence number. A worker
//! may hold at most `prefetch_factor` produced-but-undelivered batches; it
//! starts batch `k` of its share only once batch `k - prefetch_factor` has
//! been handed to a sink. Batches are delivered strictly in sequence order
//! and fan out to `num_sinks` consumers round-robin, each draining one
//! batch at a time.
//!
//! The same model runs two ways. Virtual mode evaluates the schedule as a
//! closed-form recurrence over exact integer times. Realtime mode spawns
//! real worker, dispatcher and sink threads that charge every simulated
//! cost as a busy wait, so wall-clock behavior mirrors the virtual
//! schedule while exercising true concurrency.

use std::sync::mpsc;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::dataset::{self, CacheEmulator, LatencyModel, Manifest};
use crate::error::{Error, Result};
use crate::pipeline::{collate, transform_item, Batch, EpochPlan, Sample, TransformCost};
use crate::units::Picos;

/// Loader parameters for one epoch run.
#[derive(Clone, Debug)]
pub struct LoaderConfig {
    pub num_workers: usize,
    pub prefetch_factor: usize,
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub drop_last: bool,
    pub transform: TransformCost,
    pub latency: LatencyModel,
    /// Run with real threads and busy-wait charging instead of the virtual
    /// schedule.
    pub realtime: bool,
}

impl Default for LoaderConfig {
    fn default() -> LoaderConfig {
        LoaderConfig {
            num_workers: 6,
            prefetch_factor: 2,
            batch_size: 32,
            shuffle: true,
            seed: 0,
            drop_last: false,
            transform: TransformCost::zero(),
            latency: LatencyModel::default(),
            realtime: false,
        }
    }
}

impl LoaderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_workers == 0 {
            return Err(Error::Usage("num_workers must be positive".into()));
        }
        if self.prefetch_factor == 0 {
            return Err(Error::Usage("prefetch_factor must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch_size must be positive".into()));
        }
        self.latency.validate()
    }
}

/// Consumer-side parameters: how many sinks drain batches and what each
/// delivered batch may weigh.
#[derive(Clone, Copy, Debug)]
pub struct SinkConfig {
    pub num_sinks: usize,
    /// Time a sink is busy per delivered batch.
    pub drain_per_batch: Picos,
    /// Maximum payload bytes a single delivered batch may carry.
    pub sink_budget: u64,
}

impl Default for SinkConfig {
    fn default() -> SinkConfig {
        SinkConfig {
            num_sinks: 1,
            drain_per_batch: Picos::ZERO,
            sink_budget: u64::MAX,
        }
    }
}

impl SinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sinks == 0 {
            return Err(Error::Usage("num_sinks must be positive".into()));
        }
        Ok(())
    }
}

/// Measured outcome of one epoch.
#[derive(Clone, Debug)]
pub struct EpochReport {
    /// Time from epoch start until the last batch finished draining.
    pub transfer_time: Picos,
    pub batch_count: usize,
    /// Batch sequence numbers in the order the dispatcher delivered them.
    pub delivery_order: Vec<u32>,
    /// Batches produced per worker.
    pub per_worker_batches: Vec<u64>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    /// SHA-256 over all delivered batch payloads in delivery order.
    pub payload_digest: [u8; 32],
}

impl EpochReport {
    pub fn payload_digest_hex(&self) -> String {
        hex::encode(self.payload_digest)
    }
}

/// Round-robin batch ownership: batch `s` belongs to worker `s % num_workers`.
pub fn assign_batches(batch_count: usize, num_workers: usize) -> Vec<usize> {
    assert!(num_workers >= 1, "num_workers must be positive");
    (0..batch_count).map(|s| s % num_workers).collect()
}

// Per-batch times are consumed by the schedule property tests.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct Schedule {
    pub(crate) start: Vec<Picos>,
    pub(crate) finish: Vec<Picos>,
    pub(crate) release: Vec<Picos>,
    pub(crate) transfer_time: Picos,
}

/// Evaluates the loader schedule in virtual time.
///
/// For batch `s` owned by worker `w = s % W`:
///   start(s)  = max(finish of w's previous batch,
///                   release of w's batch `prefetch_factor` positions back)
///   finish(s) = start(s) + cost(s)
///   release(s) = max(finish(s), release(s-1), free time of sink `s % G`)
/// and the owning sink is then busy until `release(s) + drain`. All
/// dependencies point to earlier sequence numbers, so one forward pass
/// suffices.
pub(crate) fn compute_schedule(
    num_workers: usize,
    prefetch_factor: usize,
    num_sinks: usize,
    drain_per_batch: Picos,
    produce_costs: &[Picos],
) -> Schedule {
    assert!(num_workers >= 1, "num_workers must be positive");
    assert!(prefetch_factor >= 1, "prefetch_factor must be positive");
    assert!(num_sinks >= 1, "num_sinks must be positive");

    let n = produce_costs.len();
    let mut start = vec![Picos::ZERO; n];
    let mut finish = vec![Picos::ZERO; n];
    let mut release = vec![Picos::ZERO; n];
    let mut sink_free = vec![Picos::ZERO; num_sinks];
    let mut last_release = Picos::ZERO;

    for s in 0..n {
        let mut t = match s.checked_sub(num_workers) {
            Some(prev_own) => finish[prev_own],
            None => Picos::ZERO,
        };
        if let Some(gate) = s.checked_sub(num_workers * prefetch_factor) {
            t = t.max(release[gate]);
        }
        start[s] = t;
        finish[s] = t + produce_costs[s];

        let sink = s % num_sinks;
        let r = finish[s].max(last_release).max(sink_free[sink]);
        release[s] = r;
        last_release = r;
        sink_free[sink] = r + drain_per_batch;
    }

    let transfer_time = if n == 0 {
        Picos::ZERO
    } else {
        release[n - 1] + drain_per_batch
    };
    Schedule {
        start,
        finish,
        release,
        transfer_time,
    }
}

/// Virtual transfer time for an epoch of batches with the given per-batch
/// production costs: time from start until the last batch finishes
/// draining. Panics if any of the three counts is zero.
pub fn simulate_schedule(
    num_workers: usize,
    prefetch_factor: usize,
    num_sinks: usize,
    drain_per_batch: Picos,
    produce_costs: &[Picos],
) -> Picos {
    compute_schedule(
        num_workers,
        prefetch_factor,
        num_sinks,
        drain_per_batch,
        produce_costs,
    )
    .transfer_time
}

/// Runs one epoch of the loader over `manifest`, charging reads through the
/// shared cache emulator, and reports timing plus delivery facts.
///
/// The cache is shared mutable state across epochs on purpose: a second
/// epoch observes whatever residency the first left behind.
pub fn run_epoch(
    config: &LoaderConfig,
    sinks: &SinkConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
    epoch_index: u64,
) -> Result<EpochReport> {
    config.validate()?;
    sinks.validate()?;
    let plan = EpochPlan::build(
        manifest.item_count(),
        config.batch_size,
        config.shuffle,
        config.drop_last,
        config.seed,
        epoch_index,
    )?;
    if plan.batches.is_empty() {
        return Ok(EpochReport {
            transfer_time: Picos::ZERO,
            batch_count: 0,
            delivery_order: Vec::new(),
            per_worker_batches: vec![0; config.num_workers],
            cache_hits: 0,
            cache_misses: 0,
            payload_digest: Sha256::digest(b"").into(),
        });
    }
    if config.realtime {
        run_epoch_realtime(config, sinks, manifest, cache, &plan)
    } else {
        run_epoch_virtual(config, sinks, manifest, cache, &plan)
    }
}

fn lock_cache(cache: &Mutex<CacheEmulator>) -> std::sync::MutexGuard<'_, CacheEmulator> {
    cache.lock().expect("cache lock poisoned")
}

fn batch_payload_bytes(manifest: &Manifest, ids: &[u32]) -> Result<u64> {
    let mut total: u64 = 0;
    for &id in ids {
        total = total.saturating_add(manifest.item(id)?.byte_size);
    }
    Ok(total)
}

/// Produces one batch: reads and transforms every item, then collates.
/// Cache charging is split from file reads so callers control how long the
/// cache lock is held.
fn produce_batch(
    config: &LoaderConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
    ids: &[u32],
    seq: u32,
    charge_wall_clock: bool,
) -> Result<Batch> {
    let mut samples = Vec::with_capacity(ids.len());
    for &id in ids {
        let record = manifest.item(id)?;
        let raw = dataset::load_item_bytes(manifest, record)?;
        let read_cost = lock_cache(cache).charge(id, record.byte_size, &config.latency);
        if charge_wall_clock {
            busy_wait(read_cost);
        }
        let (payload, transform_cost) = transform_item(raw, &config.transform);
        if charge_wall_clock {
            busy_wait(transform_cost);
        }
        samples.push(Sample {
            id,
            payload,
            elapsed: read_cost + transform_cost,
        });
    }
    collate(samples, seq)
}

fn run_epoch_virtual(
    config: &LoaderConfig,
    sinks: &SinkConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
    plan: &EpochPlan,
) -> Result<EpochReport> {
    let (hits0, misses0) = {
        let c = lock_cache(cache);
        (c.hits(), c.misses())
    };
    let batch_count = plan.batches.len();
    let mut costs = Vec::with_capacity(batch_count);
    let mut per_worker = vec![0u64; config.num_workers];
    let mut hasher = Sha256::new();

    for (seq, ids) in plan.batches.iter().enumerate() {
        let payload_bytes = batch_payload_bytes(manifest, ids)?;
        if payload_bytes > sinks.sink_budget {
            return Err(Error::SinkOverflow {
                batch_seq: seq as u32,
                payload_bytes,
                sink_budget: sinks.sink_budget,
            });
        }
        let batch = produce_batch(config, manifest, cache, ids, seq as u32, false)?;
        debug_assert_eq!(batch.payload_bytes(), payload_bytes);
        hasher.update(&batch.payload);
        per_worker[seq % config.num_workers] += 1;
        costs.push(batch.produce_elapsed);
    }

    let schedule = compute_schedule(
        config.num_workers,
        config.prefetch_factor,
        sinks.num_sinks,
        sinks.drain_per_batch,
        &costs,
    );
    let (hits1, misses1) = {
        let c = lock_cache(cache);
        (c.hits(), c.misses())
    };
    Ok(EpochReport {
        transfer_time: schedule.transfer_time,
        batch_count,
        delivery_order: (0..batch_count as u32).collect(),
        per_worker_batches: per_worker,
        cache_hits: hits1 - hits0,
        cache_misses: misses1 - misses0,
        payload_digest: hasher.finalize().into(),
    })
}

/// Counted-permit gate bounding how many undelivered batches a worker may
/// hold. Closing the gate wakes all waiters and makes further acquires
/// fail, which is how an aborting epoch unwinds its workers.
struct Gate {
    state: Mutex<GateState>,
    cv: Condvar,
}

struct GateState {
    permits: usize,
    closed: bool,
}

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate {
            state: Mutex::new(GateState {
                permits,
                closed: false,
            }),
            cv: Condvar::new(),
        }
    }

    /// Blocks for a permit; returns false if the gate closed instead.
    fn acquire(&self) -> bool {
        let mut st = self.state.lock().expect("gate lock poisoned");
        loop {
            if st.closed {
                return false;
            }
            if st.permits > 0 {
                st.permits -= 1;
                return true;
            }
            st = self.cv.wait(st).expect("gate lock poisoned");
        }
    }

    fn release(&self) {
        let mut st = self.state.lock().expect("gate lock poisoned");
        st.permits += 1;
        self.cv.notify_one();
    }

    fn close(&self) {
        let mut st = self.state.lock().expect("gate lock poisoned");
        st.closed = true;
        self.cv.notify_all();
    }
}

/// Spins until the given simulated duration has elapsed on the wall clock.
/// Sleeping would under-represent CPU contention, which is exactly what
/// realtime mode exists to exhibit.
fn busy_wait(duration: Picos) {
    if duration.is_zero() {
        return;
    }
    let target = Instant::now() + duration.to_duration();
    while Instant::now() < target {
        std::hint::spin_loop();
    }
}

fn run_epoch_realtime(
    config: &LoaderConfig,
    sinks: &SinkConfig,
    manifest: &Manifest,
    cache: &Mutex<CacheEmulator>,
    plan: &EpochPlan,
) -> Result<EpochReport> {
    let num_workers = config.num_workers;
    let num_sinks = sinks.num_sinks;
    let batch_count = plan.batches.len();
    let (hits0, misses0) = {
        let c = lock_cache(cache);
        (c.hits(), c.misses())
    };

    let gates: Vec<Gate> = (0..num_workers).map(|_| Gate::new(config.prefetch_factor)).collect();
    let mut worker_txs = Vec::with_capacity(num_workers);
    let mut worker_rxs = Vec::with_capacity(num_workers);
    for _ in 0..num_workers {
        let (tx, rx) = mpsc::channel::<Result<Batch>>();
        worker_txs.push(tx);
        worker_rxs.push(rx);
    }
    let mut sink_txs = Vec::with_capacity(num_sinks);
    let mut sink_rxs = Vec::with_capacity(num_sinks);
    for _ in 0..num_sinks {
        // Rendezvous: a handoff completes only when the sink is free.
        let (tx, rx) = mpsc::sync_channel::<Batch>(0);
        sink_txs.push(tx);
        sink_rxs.push(rx);
    }

    let started = Instant::now();
    let drain = sinks.drain_per_batch;
    let sink_budget = sinks.sink_budget;

    thread::scope(|scope| {
        for (w, tx) in worker_txs.into_iter().enumerate() {
            let gate = &gates[w];
            scope.spawn(move || {
                for (seq, ids) in plan.batches.iter().enumerate().skip(w).step_by(num_workers) {
                    if !gate.acquire() {
                        return;
                    }
                    let produced = batch_payload_bytes(manifest, ids).and_then(|payload_bytes| {
                        if payload_bytes > sink_budget {
                            return Err(Error::SinkOverflow {
                                batch_seq: seq as u32,
                                payload_bytes,
                                sink_budget,
                            });
                        }
                        produce_batch(config, manifest, cache, ids, seq as u32, true)
                    });
                    let failed = produced.is_err();
                    if tx.send(produced).is_err() || failed {
                        return;
                    }
                }
            });
        }

        let mut sink_handles = Vec::with_capacity(num_sinks);
        for rx in sink_rxs {
            sink_handles.push(scope.spawn(move || {
                let mut last_done: Option<Instant> = None;
                while let Ok(batch) = rx.recv() {
                    busy_wait(drain);
                    drop(batch);
                    last_done = Some(Instant::now());
                }
                last_done
            }));
        }

        // The dispatcher runs on this thread: strict sequence order.
        let mut delivery_order = Vec::with_capacity(batch_count);
        let mut per_worker = vec![0u64; num_workers];
        let mut hasher = Sha256::new();
        let mut abort: Option<Error> = None;
        for s in 0..batch_count {
            let w = s % num_workers;
            match worker_rxs[w].recv() {
                Ok(Ok(batch)) => {
                    delivery_order.push(batch.seq);
                    per_worker[w] += 1;
                    hasher.update(&batch.payload);
                    sink_txs[s % num_sinks]
                        .send(batch)
                        .expect("sink exited while the epoch was still running");
                    gates[w].release();
                }
                Ok(Err(e)) => {
                    abort = Some(e);
                    break;
                }
                Err(_) => panic!("worker exited without reporting a result"),
            }
        }
        if let Some(e) = abort {
            for gate in &gates {
                gate.close();
            }
            drop(worker_rxs);
            drop(sink_txs);
            return Err(e);
        }

        drop(worker_rxs);
        drop(sink_txs);
        let mut last_done = started;
        for handle in sink_handles {
            if let Some(done) = handle.join().expect("sink thread panicked") {
                last_done = last_done.max(done);
            }
        }

        let elapsed = last_done.duration_since(started);
        let (hits1, misses1) = {
            let c = lock_cache(cache);
            (c.hits(), c.misses())
        };
        Ok(EpochReport {
            transfer_time: Picos::from_nanos(elapsed.as_nanos() as u64),
            batch_count,
            delivery_order,
            per_worker_batches: per_worker,
            cache_hits: hits1 - hits0,
            cache_misses: misses1 - misses0,
            payload_digest: hasher.finalize().into(),
        })
    })
}
