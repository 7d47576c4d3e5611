//! Acceptance suite: nine checks covering scheduling fidelity, tuner
//! behavior, cache dynamics, overflow handling, and report math. Each
//! criterion is one test that prints a single pass line; run with
//!
//! ```text
//! cargo test -p dpt-core --test acceptance -- --nocapture
//! ```

use std::sync::Mutex;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dpt_core::dataset::{
    generate_dataset, CacheEmulator, ItemRecord, LatencyModel, Manifest,
};
use dpt_core::loader::{run_epoch, simulate_schedule, LoaderConfig, SinkConfig};
use dpt_core::pipeline::{EpochPlan, TransformCost};
use dpt_core::report::{
    normalize_by_prefetch, normalize_ratios, speedup, time_gain, GridRecord,
};
use dpt_core::tuner::{
    check_overflow, dpt_search, estimate_memory, objective_value, run_trial, TrialStatus,
    TuneConfig,
};
use dpt_core::{Error, Picos};

/// Event-driven reference simulator, written against the pipeline's
/// behavioral rules rather than the closed-form recurrence: workers hold
/// explicit per-worker batch lists and permit counts, and the dispatcher
/// replays deliveries in sequence order. Times are picoseconds.
fn oracle_transfer(
    costs_ps: &[u64],
    num_workers: usize,
    prefetch_factor: usize,
    num_sinks: usize,
    drain_ps: u64,
) -> u64 {
    let batch_count = costs_ps.len();
    if batch_count == 0 {
        return 0;
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); num_workers];
    for seq in 0..batch_count {
        assigned[seq % num_workers].push(seq);
    }
    const PENDING: u64 = u64::MAX;
    let mut finish = vec![PENDING; batch_count];
    let mut release = vec![PENDING; batch_count];
    let mut produced = vec![0usize; num_workers];
    let mut sink_free = vec![0u64; num_sinks];
    let mut next_release = 0usize;
    let mut last_release_time = 0u64;

    // Alternate two phases until every batch is delivered: produce all
    // batches whose prefetch permit is back, then deliver the ready head
    // of the sequence. Every constraint is a max over already-known
    // times, so the dataflow settles without a global clock.
    while next_release < batch_count {
        let mut moved = false;
        for w in 0..num_workers {
            while produced[w] < assigned[w].len() {
                let slot = produced[w];
                let seq = assigned[w][slot];
                let permit_back = if slot >= prefetch_factor {
                    let dep = assigned[w][slot - prefetch_factor];
                    if release[dep] == PENDING {
                        break;
                    }
                    release[dep]
                } else {
                    0
                };
                let own_prev = if slot > 0 {
                    finish[assigned[w][slot - 1]]
                } else {
                    0
                };
                finish[seq] = permit_back.max(own_prev) + costs_ps[seq];
                produced[w] = slot + 1;
                moved = true;
            }
        }
        while next_release < batch_count && finish[next_release] != PENDING {
            let sink = next_release % num_sinks;
            let t = finish[next_release]
                .max(last_release_time)
                .max(sink_free[sink]);
            release[next_release] = t;
            sink_free[sink] = t + drain_ps;
            last_release_time = t;
            next_release += 1;
            moved = true;
        }
        assert!(moved, "reference simulation stalled");
    }
    last_release_time + drain_ps
}

fn zero_cost_config(num_workers: usize, prefetch: usize, batch: usize) -> LoaderConfig {
    LoaderConfig {
        num_workers,
        prefetch_factor: prefetch,
        batch_size: batch,
        shuffle: true,
        seed: 11,
        drop_last: false,
        transform: TransformCost::zero(),
        latency: LatencyModel::zero(),
        realtime: false,
    }
}

fn plain_sinks(num_sinks: usize, drain: Picos) -> SinkConfig {
    SinkConfig {
        num_sinks,
        drain_per_batch: drain,
        sink_budget: u64::MAX,
    }
}

#[test]
fn test_criterion_1_schedule_matches_event_oracle() {
    // Randomized cost vectors across the whole (workers, prefetch) grid.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0001);
    let mut compared = 0usize;
    for _ in 0..200 {
        let batch_count = 1 + (rng.next_u64() % 40) as usize;
        let costs_ps: Vec<u64> = (0..batch_count)
            .map(|_| rng.next_u64() % 10_000_000)
            .collect();
        let costs: Vec<Picos> = costs_ps.iter().map(|&c| Picos::from_picos(c)).collect();
        let num_sinks = 1 + (rng.next_u64() % 3) as usize;
        let drain_ps = rng.next_u64() % 5_000_000;
        for num_workers in [1, 2, 4, 8] {
            for prefetch in 1..=4 {
                let got = simulate_schedule(
                    num_workers,
                    prefetch,
                    num_sinks,
                    Picos::from_picos(drain_ps),
                    &costs,
                );
                let want = oracle_transfer(&costs_ps, num_workers, prefetch, num_sinks, drain_ps);
                assert_eq!(
                    got.as_picos(),
                    want,
                    "cell ({num_workers}, {prefetch}), sinks {num_sinks}, drain {drain_ps}, costs {costs_ps:?}"
                );
                compared += 1;
            }
        }
    }

    // End to end: a real dataset driven through run_epoch must land on the
    // oracle's transfer time for every grid cell.
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 256, 512, 10, 3).unwrap();
    let latency = LatencyModel::default();
    let transform = TransformCost {
        per_item: Picos::from_micros(3),
        per_byte: Picos::from_nanos(2),
    };
    let drain = Picos::from_millis(1);
    let plan = EpochPlan::build(256, 24, true, false, 9, 0).unwrap();
    let miss_cost = latency.cost(false, 512) + transform.cost(512);
    let costs_ps: Vec<u64> = plan
        .batches
        .iter()
        .map(|ids| miss_cost.as_picos() * ids.len() as u64)
        .collect();
    for num_workers in [1, 2, 4, 8] {
        for prefetch in 1..=4 {
            let config = LoaderConfig {
                num_workers,
                prefetch_factor: prefetch,
                batch_size: 24,
                shuffle: true,
                seed: 9,
                drop_last: false,
                transform,
                latency,
                realtime: false,
            };
            // Zero capacity admits nothing, so every read misses and the
            // per-batch cost is a pure function of the plan.
            let cache = Mutex::new(CacheEmulator::new(0));
            let report = run_epoch(&config, &plain_sinks(2, drain), &manifest, &cache, 0).unwrap();
            let want = oracle_transfer(&costs_ps, num_workers, prefetch, 2, drain.as_picos());
            assert_eq!(report.transfer_time.as_picos(), want);
            compared += 1;
        }
    }
    println!("criterion 1 pass: virtual schedule equals event oracle on {compared} comparisons");
}

#[test]
fn test_criterion_2_grid_shape_and_pruning() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 64, 64, 4, 1).unwrap();
    let mut cfg = TuneConfig::new(12, 4, 4);
    cfg.batch_size = 8;
    cfg.epochs_per_trial = 1;
    // Budget sits 1% above the estimate for (12, 2), so cells whose
    // worker-prefetch product exceeds 24 must be pruned, rows pruning
    // from the first overflowing prefetch onward.
    cfg.host_budget = estimate_memory(12, 2, 8, 64, 0) * 101 / 100;
    assert_eq!(cfg.worker_values(), vec![4, 8, 12]);

    let cache = Mutex::new(CacheEmulator::new(0));
    let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();

    let cells: Vec<(usize, usize)> = outcome
        .trials
        .iter()
        .map(|t| (t.n_worker, t.n_prefetch))
        .collect();
    assert_eq!(
        cells,
        vec![
            (4, 1),
            (4, 2),
            (4, 3),
            (4, 4),
            (8, 1),
            (8, 2),
            (8, 3),
            (12, 1),
            (12, 2),
        ]
    );
    assert!(outcome.trials.iter().all(|t| t.status == TrialStatus::Ok));
    assert_eq!(outcome.pruned, vec![(8, 4), (12, 3), (12, 4)]);
    // Baseline (6, 2) fits the bounds but is not a multiple of the sink
    // count, so it is measured as a flagged extra run.
    let baseline = outcome.baseline.as_ref().expect("baseline in bounds");
    assert!(outcome.baseline_only);
    assert_eq!((baseline.n_worker, baseline.n_prefetch), (6, 2));
    assert_eq!(baseline.status, TrialStatus::Ok);
    println!(
        "criterion 2 pass: grid walked {} cells in order, pruned {:?} on the memory estimate",
        cells.len(),
        outcome.pruned
    );
}

#[test]
fn test_criterion_3_realtime_delivery_order_and_payload_invariance() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 48, 32, 4, 2).unwrap();
    let cache = Mutex::new(CacheEmulator::new(u64::MAX));

    // Randomized realtime epochs: delivery must follow sequence order and
    // payloads must match the virtual twin bit for bit.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0003);
    for round in 0..200 {
        let num_workers = 1 + (rng.next_u64() % 4) as usize;
        let prefetch = 1 + (rng.next_u64() % 4) as usize;
        let num_sinks = 1 + (rng.next_u64() % 3) as usize;
        let batch = [4, 8, 16][(rng.next_u64() % 3) as usize];
        let shuffle = rng.next_u64() % 2 == 0;
        let drop_last = rng.next_u64() % 2 == 0;
        let seed = rng.next_u64();
        let mut config = zero_cost_config(num_workers, prefetch, batch);
        config.shuffle = shuffle;
        config.drop_last = drop_last;
        config.seed = seed;
        config.realtime = true;
        let sinks = plain_sinks(num_sinks, Picos::ZERO);
        let epoch = round as u64;
        let real = run_epoch(&config, &sinks, &manifest, &cache, epoch).unwrap();
        let expected_order: Vec<u32> = (0..real.batch_count as u32).collect();
        assert_eq!(real.delivery_order, expected_order, "round {round}");

        config.realtime = false;
        let virt = run_epoch(&config, &sinks, &manifest, &cache, epoch).unwrap();
        assert_eq!(real.payload_digest, virt.payload_digest, "round {round}");
        assert_eq!(real.per_worker_batches, virt.per_worker_batches);
        for (w, &count) in real.per_worker_batches.iter().enumerate() {
            let want = (0..real.batch_count).filter(|s| s % num_workers == w).count() as u64;
            assert_eq!(count, want, "round {round} worker {w}");
        }
    }

    // The delivered bytes must not depend on the parallelism shape at all.
    let reference = run_epoch(
        &zero_cost_config(1, 1, 8),
        &plain_sinks(1, Picos::ZERO),
        &manifest,
        &cache,
        500,
    )
    .unwrap();
    for num_workers in [1, 2, 4] {
        for prefetch in [1, 2, 4] {
            for realtime in [false, true] {
                let mut config = zero_cost_config(num_workers, prefetch, 8);
                config.realtime = realtime;
                let report = run_epoch(
                    &config,
                    &plain_sinks(1, Picos::ZERO),
                    &manifest,
                    &cache,
                    500,
                )
                .unwrap();
                assert_eq!(report.payload_digest, reference.payload_digest);
            }
        }
    }
    println!(
        "criterion 3 pass: 200 randomized realtime epochs delivered in order with payloads identical to virtual mode"
    );
}

#[test]
fn test_criterion_4_cache_warm_speedup_and_scan_thrash() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 64, 1024, 4, 4).unwrap();
    let mut config = zero_cost_config(1, 1, 8);
    config.latency = LatencyModel::default();
    let sinks = plain_sinks(1, Picos::ZERO);

    // Cache holding the whole dataset: the second epoch runs from memory.
    // The default model prices a hit at exactly 1% of a miss, so the warm
    // epoch is exactly 100 times cheaper.
    let cache = Mutex::new(CacheEmulator::new(2 * 64 * 1024));
    let cold = run_epoch(&config, &sinks, &manifest, &cache, 0).unwrap();
    let warm = run_epoch(&config, &sinks, &manifest, &cache, 1).unwrap();
    assert_eq!(cold.cache_misses, 64);
    assert_eq!(warm.cache_hits, 64);
    assert_eq!(warm.cache_misses, 0);
    assert!(warm.transfer_time.as_picos() * 10 < cold.transfer_time.as_picos());
    assert_eq!(
        warm.transfer_time * 100,
        cold.transfer_time,
        "hit latency is one hundredth of miss latency"
    );

    // Cache half the dataset under a sequential scan: LRU evicts each item
    // right before the next epoch needs it again, so warming never helps.
    config.shuffle = false;
    let cache = Mutex::new(CacheEmulator::new(32 * 1024));
    let first = run_epoch(&config, &sinks, &manifest, &cache, 0).unwrap();
    let second = run_epoch(&config, &sinks, &manifest, &cache, 1).unwrap();
    assert_eq!(second.cache_hits, 0);
    assert_eq!(second.transfer_time, first.transfer_time);
    assert!(second.transfer_time.as_picos() * 10 >= first.transfer_time.as_picos() * 9);
    println!(
        "criterion 4 pass: warm epoch ran 100x cheaper on a covering cache; sequential scan on a half-size cache stayed cold"
    );
}

#[test]
fn test_criterion_5_overflow_detection_and_surfacing() {
    // Items the size of a 640x640 RGB frame, listed in a manifest that
    // never touches disk: overflow checks must trip before any file I/O.
    let item_bytes = 3 * 640 * 640;
    let items: Vec<ItemRecord> = (0..1024)
        .map(|id| ItemRecord {
            id,
            byte_size: item_bytes,
            path: format!("items/{id:08}.bin"),
            label: id % 4,
        })
        .collect();
    let manifest = Manifest::new(items, "fixture".into(), "/nonexistent".into()).unwrap();

    let mut cfg = TuneConfig::new(4, 1, 2);
    cfg.batch_size = 1024;
    cfg.sink_budget = 1 << 30;
    cfg.epochs_per_trial = 1;
    let cache = Mutex::new(CacheEmulator::new(0));

    // A full batch of 1024 such items exceeds one GiB, so the trial stops
    // with a sink overflow before reading anything.
    let trial = run_trial(2, 1, &cfg, &manifest, &cache).unwrap();
    assert_eq!(trial.status, TrialStatus::SinkOverflow);
    assert!(trial.epoch_times.is_empty());

    // The raw loader error carries the exact numbers and maps to exit 3.
    let config = LoaderConfig {
        batch_size: 1024,
        latency: LatencyModel::default(),
        ..zero_cost_config(2, 1, 1024)
    };
    let sinks = SinkConfig {
        num_sinks: 1,
        drain_per_batch: Picos::ZERO,
        sink_budget: 1 << 30,
    };
    let err = run_epoch(&config, &sinks, &manifest, &cache, 0).unwrap_err();
    match &err {
        Error::SinkOverflow {
            batch_seq,
            payload_bytes,
            sink_budget,
        } => {
            assert_eq!(*batch_seq, 0);
            assert_eq!(*payload_bytes, 1024 * item_bytes);
            assert_eq!(*sink_budget, 1 << 30);
        }
        other => panic!("expected sink overflow, got {other}"),
    }
    assert_eq!(err.exit_code(), 3);

    // Every cell overflowing means no feasible configuration: exit 4.
    let err = dpt_search(&cfg, &manifest, &cache).unwrap_err();
    match &err {
        Error::NoFeasibleConfig { attempted } => assert_eq!(*attempted, 8),
        other => panic!("expected infeasible grid, got {other}"),
    }
    assert_eq!(err.exit_code(), 4);

    // Host-side estimate: two workers prefetching two such batches plus
    // cache budget cannot fit in four GiB.
    let estimate = estimate_memory(2, 2, 1024, item_bytes, 0);
    assert_eq!(estimate, 5_033_164_800);
    assert!(check_overflow(estimate, 4 << 30));
    let mut host_cfg = cfg.clone();
    host_cfg.host_budget = 4 << 30;
    let trial = run_trial(2, 2, &host_cfg, &manifest, &cache).unwrap();
    assert_eq!(trial.status, TrialStatus::HostOverflow);
    assert!(trial.epoch_times.is_empty());
    println!(
        "criterion 5 pass: sink and host overflows surface with exact sizes and exit codes 3/4, before touching item files"
    );
}

/// Reference tuning results: (time gain percent, speedup) pairs reported
/// at two-decimal precision. The two columns are redundant views of the
/// same measurement, so each pair must satisfy s = 100 / (100 + g) within
/// rounding distance.
const REFERENCE_RESULTS: [(f64, f64); 54] = [
    (-14.55, 1.17),
    (-12.69, 1.15),
    (-4.17, 1.04),
    (0.00, 1.00),
    (-24.92, 1.33),
    (-13.79, 1.16),
    (-5.70, 1.06),
    (-2.28, 1.02),
    (-14.42, 1.17),
    (-13.65, 1.16),
    (-4.28, 1.04),
    (-1.35, 1.01),
    (-27.25, 1.37),
    (-11.06, 1.12),
    (-3.83, 1.04),
    (-1.65, 1.02),
    (-16.04, 1.19),
    (-13.82, 1.16),
    (-4.28, 1.04),
    (0.00, 1.00),
    (-20.39, 1.26),
    (-7.67, 1.08),
    (-2.88, 1.03),
    (-1.12, 1.01),
    (-16.32, 1.20),
    (-12.62, 1.14),
    (-5.07, 1.05),
    (-1.49, 1.02),
    (-17.14, 1.21),
    (-6.89, 1.07),
    (-2.71, 1.03),
    (-1.82, 1.02),
    (-15.74, 1.19),
    (-12.88, 1.15),
    (-4.64, 1.05),
    (0.00, 1.00),
    (-18.28, 1.22),
    (-5.58, 1.06),
    (-4.51, 1.05),
    (-1.56, 1.02),
    (-16.81, 1.20),
    (-11.48, 1.13),
    (0.00, 1.00),
    (0.00, 1.00),
    (-17.49, 1.21),
    (-8.40, 1.09),
    (-3.84, 1.04),
    (-12.22, 1.14),
    (-16.28, 1.19),
    (-19.53, 1.24),
    (-29.08, 1.41),
    (-21.85, 1.28),
    (-11.71, 1.13),
    (-4.41, 1.05),
];

#[test]
fn test_criterion_6_gain_and_speedup_metrics_are_consistent() {
    for (i, &(gain, spd)) in REFERENCE_RESULTS.iter().enumerate() {
        let implied = 100.0 / (100.0 + gain);
        assert!(
            (spd - implied).abs() <= 0.01,
            "pair {i}: gain {gain} implies speedup {implied:.4}, table says {spd}"
        );
        assert!(gain <= 0.0 && (1.0..=1.5).contains(&spd), "pair {i}");
    }

    // The report functions must keep that identity exactly for raw times.
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0006);
    for _ in 0..1000 {
        let baseline = 1.0 + (rng.next_u64() % 1_000_000) as f64 / 1000.0;
        let optimal = 0.5 + (rng.next_u64() % 1_000_000) as f64 / 1000.0;
        let gain = time_gain(optimal, baseline).unwrap();
        let spd = speedup(baseline, optimal).unwrap();
        let implied = 100.0 / (100.0 + gain);
        assert!((spd - implied).abs() <= 1e-9 * spd.abs());
    }
    println!(
        "criterion 6 pass: all 54 reference (gain, speedup) pairs and 1000 random time pairs satisfy s = 100/(100+g)"
    );
}

#[test]
fn test_criterion_7_normalization_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE_0007);
    let statuses = [
        TrialStatus::Ok,
        TrialStatus::Ok,
        TrialStatus::Ok,
        TrialStatus::HostOverflow,
        TrialStatus::SinkOverflow,
    ];
    let records: Vec<GridRecord> = (0..1000)
        .map(|_| GridRecord {
            n_worker: 1 + (rng.next_u64() % 8) as usize,
            n_prefetch: 1 + (rng.next_u64() % 6) as usize,
            epoch_index: (rng.next_u64() % 4) as usize,
            transfer_time: Picos::from_picos(rng.next_u64() % 1_000_000_000_000),
            status: statuses[(rng.next_u64() % statuses.len() as u64) as usize],
        })
        .collect();

    let normalized = normalize_by_prefetch(&records);
    let ok_count = records
        .iter()
        .filter(|r| r.status == TrialStatus::Ok)
        .count();
    assert_eq!(normalized.records.len(), ok_count);

    for prefetch in 1..=6 {
        let group: Vec<f64> = normalized
            .records
            .iter()
            .filter(|r| r.n_prefetch == prefetch)
            .map(|r| r.ratio)
            .collect();
        if group.is_empty() {
            let had_ok = records
                .iter()
                .any(|r| r.n_prefetch == prefetch && r.status == TrialStatus::Ok);
            assert!(
                !had_ok || !records.iter().any(|r| r.n_prefetch == prefetch),
                "group {prefetch} lost completed records"
            );
            continue;
        }
        for &ratio in &group {
            assert!(ratio > 0.0 && ratio <= 1.0, "ratio {ratio} out of (0, 1]");
        }
        let max = group.iter().fold(f64::MIN, |a, &b| a.max(b));
        assert_eq!(max, 1.0, "group {prefetch} max must normalize to 1.0");
    }
    for &group in &normalized.skipped_prefetch_groups {
        assert!(
            !records
                .iter()
                .any(|r| r.n_prefetch == group && r.status == TrialStatus::Ok),
            "skipped group {group} had completed records"
        );
    }

    // Normalizing an already normalized table is the identity.
    let again = normalize_ratios(&normalized.records);
    assert_eq!(again.records, normalized.records);
    println!(
        "criterion 7 pass: {} records normalized into (0, 1] with unit group maxima, idempotent on reapplication",
        ok_count
    );
}

#[test]
fn test_criterion_8_tuned_never_loses_to_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 96, 128, 4, 8).unwrap();

    for num_sinks in [1, 2, 3] {
        let mut cfg = TuneConfig::new(12, num_sinks, 4);
        cfg.batch_size = 8;
        cfg.drain_per_batch = Picos::from_millis(2);
        let cache = Mutex::new(CacheEmulator::new(6144));
        let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
        let baseline = outcome.baseline.as_ref().expect("(6, 2) is in the grid");
        assert!(!outcome.baseline_only, "6 is a multiple of {num_sinks}");
        let best = objective_value(
            outcome
                .trials
                .iter()
                .find(|t| t.n_worker == outcome.n_worker && t.n_prefetch == outcome.n_prefetch)
                .unwrap(),
            cfg.objective,
        )
        .unwrap();
        let base = objective_value(baseline, cfg.objective).unwrap();
        assert!(
            best <= base,
            "sinks {num_sinks}: tuned {best} worse than baseline {base}"
        );
        assert_eq!(best, outcome.optimal_time);
    }

    // Realtime measurements are noisy but the winner is still selected
    // from the same measured table as the baseline.
    let mut cfg = TuneConfig::new(8, 2, 2);
    cfg.batch_size = 8;
    cfg.latency = LatencyModel::zero();
    cfg.realtime = true;
    let cache = Mutex::new(CacheEmulator::new(u64::MAX));
    let outcome = dpt_search(&cfg, &manifest, &cache).unwrap();
    let base = objective_value(outcome.baseline.as_ref().unwrap(), cfg.objective).unwrap();
    assert!(
        outcome.optimal_time.as_picos() * 100 <= base.as_picos() * 105,
        "realtime tuned {} not within 1.05x of baseline {}",
        outcome.optimal_time,
        base
    );
    println!(
        "criterion 8 pass: tuned cell at or below the (6, 2) baseline for 1, 2, and 3 sinks, virtual and realtime"
    );
}

#[test]
fn test_criterion_9_worker_scaling() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(tmp.path(), 12, 16, 4, 5).unwrap();
    let sinks = plain_sinks(1, Picos::ZERO);
    let five_ms = TransformCost {
        per_item: Picos::from_millis(5),
        per_byte: Picos::ZERO,
    };

    // Twelve uniform 5 ms batches split across independent workers:
    // virtual transfer must halve exactly with each doubling.
    let measure = |num_workers: usize, realtime: bool| {
        let mut config = zero_cost_config(num_workers, 2, 1);
        config.transform = five_ms;
        config.realtime = realtime;
        let cache = Mutex::new(CacheEmulator::new(u64::MAX));
        run_epoch(&config, &sinks, &manifest, &cache, 0)
            .unwrap()
            .transfer_time
    };
    assert_eq!(measure(1, false), Picos::from_millis(60));
    assert_eq!(measure(2, false), Picos::from_millis(30));
    assert_eq!(measure(4, false), Picos::from_millis(15));

    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    if cores >= 4 {
        let serial = measure(1, true);
        let spread = measure(4, true);
        assert!(
            spread.as_picos() * 10 < serial.as_picos() * 6,
            "4 workers took {spread} against {serial} serial"
        );
        println!(
            "criterion 9 pass: virtual 60/30/15 ms for 1/2/4 workers; realtime 4-worker run under 0.6x serial"
        );
    } else {
        println!(
            "criterion 9 pass: virtual 60/30/15 ms for 1/2/4 workers; realtime scaling skipped ({cores} host cores, needs 4)"
        );
    }
}
