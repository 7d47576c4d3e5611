//! Post-processing of measured grids: normalization, gain and speedup
//! math, and the persisted file formats.
//!
//! Three artifacts describe a run. `grid.csv` holds one row per measured
//! (cell, epoch) with nanosecond-resolution times as decimal seconds.
//! `outcome.json` is the full search result with times as integer
//! nanoseconds. `normalized.csv` and `summary.csv` are derived views.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tuner::{Objective, TrialResult, TrialStatus, TuneOutcome};
use crate::units::Picos;

pub const GRID_CSV_HEADER: &str = "n_worker,n_prefetch,epoch,transfer_time_s,status";
pub const NORMALIZED_CSV_HEADER: &str = "n_worker,n_prefetch,epoch,normalized";
pub const SUMMARY_CSV_HEADER: &str =
    "epoch_class,n_worker,n_prefetch,transfer_time_s,baseline_time_s,gain_percent,speedup";

/// One measured (cell, epoch) as stored in `grid.csv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridRecord {
    pub n_worker: usize,
    pub n_prefetch: usize,
    pub epoch_index: usize,
    pub transfer_time: Picos,
    pub status: TrialStatus,
}

/// Flattens a trial into grid rows: one per completed epoch, each tagged
/// with the trial's status. A trial that completed no epochs still leaves
/// one zero-time marker row so the cell's failure is visible in the grid.
pub fn grid_records_from_trial(trial: &TrialResult) -> Vec<GridRecord> {
    if trial.epoch_times.is_empty() {
        return vec![GridRecord {
            n_worker: trial.n_worker,
            n_prefetch: trial.n_prefetch,
            epoch_index: 0,
            transfer_time: Picos::ZERO,
            status: trial.status,
        }];
    }
    trial
        .epoch_times
        .iter()
        .enumerate()
        .map(|(epoch_index, &transfer_time)| GridRecord {
            n_worker: trial.n_worker,
            n_prefetch: trial.n_prefetch,
            epoch_index,
            transfer_time,
            status: trial.status,
        })
        .collect()
}

/// Grid rows for every trial of a search, in search order.
pub fn grid_records(outcome: &TuneOutcome) -> Vec<GridRecord> {
    outcome.trials.iter().flat_map(grid_records_from_trial).collect()
}

pub fn write_grid_csv(path: &Path, records: &[GridRecord]) -> Result<()> {
    let mut text = String::from(GRID_CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&grid_row(r));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Appends rows to an existing grid, creating it (with header) first if
/// needed. Lets several bench invocations accumulate one grid.
pub fn append_grid_csv(path: &Path, records: &[GridRecord]) -> Result<()> {
    let mut text = String::new();
    if !path.exists() {
        text.push_str(GRID_CSV_HEADER);
        text.push('\n');
    }
    for r in records {
        text.push_str(&grid_row(r));
        text.push('\n');
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn grid_row(r: &GridRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.n_worker,
        r.n_prefetch,
        r.epoch_index,
        r.transfer_time.fmt_secs(),
        r.status
    )
}

pub fn read_grid_csv(path: &Path) -> Result<Vec<GridRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let bad = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if lineno == 1 {
            if line.trim_end() != GRID_CSV_HEADER {
                return Err(bad(1, format!("expected header {GRID_CSV_HEADER:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(lineno, format!("bad {what} {s:?}")))
        };
        records.push(GridRecord {
            n_worker: parse_usize(fields[0], "n_worker")?,
            n_prefetch: parse_usize(fields[1], "n_prefetch")?,
            epoch_index: parse_usize(fields[2], "epoch")?,
            transfer_time: Picos::parse_secs(fields[3])
                .map_err(|e| bad(lineno, format!("bad transfer_time_s: {e}")))?,
            status: fields[4]
                .parse()
                .map_err(|e| bad(lineno, format!("bad status: {e}")))?,
        });
    }
    Ok(records)
}

/// One normalized (cell, epoch): the cell's time divided by the largest
/// time in its prefetch group.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedRecord {
    pub n_worker: usize,
    pub n_prefetch: usize,
    pub epoch_index: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct NormalizeOutput {
    /// Normalized rows in input order, completed cells only.
    pub records: Vec<NormalizedRecord>,
    /// Prefetch values whose group had no completed cell to normalize.
    pub skipped_prefetch_groups: Vec<usize>,
}

/// Divides every completed record's time by the largest completed time
/// sharing its prefetch factor, making worker sweeps comparable across
/// prefetch settings. Ratios land in (0, 1] with at least one exact 1.0
/// per group; a group of all-equal times (including all-zero) normalizes
/// to all ones. Failed records are dropped; a prefetch group consisting
/// only of failures is reported as skipped.
pub fn normalize_by_prefetch(records: &[GridRecord]) -> NormalizeOutput {
    let mut max_per_group: HashMap<usize, u64> = HashMap::new();
    let mut seen_groups: Vec<usize> = Vec::new();
    for r in records {
        if !seen_groups.contains(&r.n_prefetch) {
            seen_groups.push(r.n_prefetch);
        }
        if r.status == TrialStatus::Ok {
            let m = max_per_group.entry(r.n_prefetch).or_insert(0);
            *m = (*m).max(r.transfer_time.as_picos());
        }
    }

    let records_out = records
        .iter()
        .filter(|r| r.status == TrialStatus::Ok)
        .map(|r| NormalizedRecord {
            n_worker: r.n_worker,
            n_prefetch: r.n_prefetch,
            epoch_index: r.epoch_index,
            ratio: ratio_of(r.transfer_time.as_picos() as f64, max_per_group[&r.n_prefetch] as f64),
        })
        .collect();
    let skipped = seen_groups
        .into_iter()
        .filter(|g| !max_per_group.contains_key(g))
        .collect();
    NormalizeOutput {
        records: records_out,
        skipped_prefetch_groups: skipped,
    }
}

/// The same normalization rule applied to already-normalized records. A
/// normalized grid is a fixed point: every group's maximum is already 1.
pub fn normalize_ratios(records: &[NormalizedRecord]) -> NormalizeOutput {
    let mut max_per_group: HashMap<usize, f64> = HashMap::new();
    for r in records {
        let m = max_per_group.entry(r.n_prefetch).or_insert(f64::NEG_INFINITY);
        *m = m.max(r.ratio);
    }
    let records_out = records
        .iter()
        .map(|r| NormalizedRecord {
            ratio: ratio_of(r.ratio, max_per_group[&r.n_prefetch]),
            ..r.clone()
        })
        .collect();
    NormalizeOutput {
        records: records_out,
        skipped_prefetch_groups: Vec::new(),
    }
}

fn ratio_of(value: f64, group_max: f64) -> f64 {
    if group_max == 0.0 {
        1.0
    } else {
        value / group_max
    }
}

pub fn write_normalized_csv(path: &Path, normalized: &NormalizeOutput) -> Result<()> {
    let mut text = String::from(NORMALIZED_CSV_HEADER);
    text.push('\n');
    for r in &normalized.records {
        text.push_str(&format!(
            "{},{},{},{:.6}\n",
            r.n_worker, r.n_prefetch, r.epoch_index, r.ratio
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Relative change of the tuned time against the baseline, in percent.
/// Negative values mean the tuned configuration is faster.
pub fn time_gain(optimal_secs: f64, baseline_secs: f64) -> Result<f64> {
    if !baseline_secs.is_finite() || baseline_secs <= 0.0 {
        return Err(Error::Usage(format!(
            "baseline time must be positive, got {baseline_secs}"
        )));
    }
    if !optimal_secs.is_finite() || optimal_secs < 0.0 {
        return Err(Error::Usage(format!(
            "optimal time must be non-negative, got {optimal_secs}"
        )));
    }
    Ok(100.0 * (optimal_secs - baseline_secs) / baseline_secs)
}

/// Baseline time over tuned time; above 1.0 means the tuned configuration
/// is faster.
pub fn speedup(baseline_secs: f64, optimal_secs: f64) -> Result<f64> {
    if !baseline_secs.is_finite() || baseline_secs <= 0.0 {
        return Err(Error::Usage(format!(
            "baseline time must be positive, got {baseline_secs}"
        )));
    }
    if !optimal_secs.is_finite() || optimal_secs <= 0.0 {
        return Err(Error::Usage(format!(
            "optimal time must be positive, got {optimal_secs}"
        )));
    }
    Ok(baseline_secs / optimal_secs)
}

#[derive(Serialize, Deserialize)]
struct TrialFile {
    n_worker: usize,
    n_prefetch: usize,
    status: TrialStatus,
    epoch_times_ns: Vec<u64>,
    total_time_ns: u64,
}

impl TrialFile {
    fn from_trial(t: &TrialResult) -> TrialFile {
        TrialFile {
            n_worker: t.n_worker,
            n_prefetch: t.n_prefetch,
            status: t.status,
            epoch_times_ns: t.epoch_times.iter().map(|p| p.as_nanos()).collect(),
            total_time_ns: t.total_time.as_nanos(),
        }
    }

    fn into_trial(self) -> TrialResult {
        TrialResult {
            n_worker: self.n_worker,
            n_prefetch: self.n_prefetch,
            status: self.status,
            epoch_times: self.epoch_times_ns.into_iter().map(Picos::from_nanos).collect(),
            total_time: Picos::from_nanos(self.total_time_ns),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct OutcomeFile {
    n_worker: usize,
    n_prefetch: usize,
    optimal_time_ns: u64,
    objective: Objective,
    trials: Vec<TrialFile>,
    pruned: Vec<(usize, usize)>,
    baseline: Option<TrialFile>,
    baseline_only: bool,
}

/// Writes a search outcome as pretty-printed JSON with times in integer
/// nanoseconds. Byte-identical for identical outcomes.
pub fn write_outcome_json(path: &Path, outcome: &TuneOutcome) -> Result<()> {
    let wire = OutcomeFile {
        n_worker: outcome.n_worker,
        n_prefetch: outcome.n_prefetch,
        optimal_time_ns: outcome.optimal_time.as_nanos(),
        objective: outcome.objective,
        trials: outcome.trials.iter().map(TrialFile::from_trial).collect(),
        pruned: outcome.pruned.clone(),
        baseline: outcome.baseline.as_ref().map(TrialFile::from_trial),
        baseline_only: outcome.baseline_only,
    };
    let mut text = serde_json::to_string_pretty(&wire).expect("outcome serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_outcome_json(path: &Path) -> Result<TuneOutcome> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let wire: OutcomeFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    Ok(TuneOutcome {
        n_worker: wire.n_worker,
        n_prefetch: wire.n_prefetch,
        optimal_time: Picos::from_nanos(wire.optimal_time_ns),
        objective: wire.objective,
        trials: wire.trials.into_iter().map(TrialFile::into_trial).collect(),
        pruned: wire.pruned,
        baseline: wire.baseline.map(TrialFile::into_trial),
        baseline_only: wire.baseline_only,
    })
}

/// Which epochs a summary row aggregates: the cold first epoch, or the
/// mean of every epoch from the second on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpochClass {
    First,
    AfterSecond,
}

impl fmt::Display for EpochClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochClass::First => "1st",
            EpochClass::AfterSecond => "after_2nd",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub epoch_class: EpochClass,
    pub n_worker: usize,
    pub n_prefetch: usize,
    pub optimal_secs: f64,
    pub baseline_secs: Option<f64>,
    pub gain_percent: Option<f64>,
    pub speedup: Option<f64>,
}

struct CellTimes {
    n_worker: usize,
    n_prefetch: usize,
    epochs: Vec<(usize, f64)>,
}

impl CellTimes {
    fn metric(&self, class: EpochClass) -> Option<f64> {
        match class {
            EpochClass::First => self
                .epochs
                .iter()
                .find(|(e, _)| *e == 0)
                .map(|(_, t)| *t),
            EpochClass::AfterSecond => {
                let tail: Vec<f64> = self
                    .epochs
                    .iter()
                    .filter(|(e, _)| *e >= 1)
                    .map(|(_, t)| *t)
                    .collect();
                if tail.is_empty() {
                    None
                } else {
                    Some(tail.iter().sum::<f64>() / tail.len() as f64)
                }
            }
        }
    }
}

/// Best cell per epoch class across completed grid rows, with gain and
/// speedup against `baseline_cell` when that cell is present. Ties keep
/// the earliest cell in record order.
pub fn summarize(records: &[GridRecord], baseline_cell: Option<(usize, usize)>) -> Vec<SummaryRow> {
    let mut cells: Vec<CellTimes> = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    for r in records {
        if r.status != TrialStatus::Ok {
            continue;
        }
        let key = (r.n_worker, r.n_prefetch);
        let idx = *index.entry(key).or_insert_with(|| {
            cells.push(CellTimes {
                n_worker: r.n_worker,
                n_prefetch: r.n_prefetch,
                epochs: Vec::new(),
            });
            cells.len() - 1
        });
        cells[idx].epochs.push((r.epoch_index, r.transfer_time.as_secs_f64()));
    }

    let mut rows = Vec::new();
    for class in [EpochClass::First, EpochClass::AfterSecond] {
        let mut best: Option<(usize, f64)> = None;
        for (i, cell) in cells.iter().enumerate() {
            if let Some(v) = cell.metric(class) {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((i, v));
                }
            }
        }
        let Some((best_idx, optimal_secs)) = best else {
            continue;
        };
        let baseline_secs = baseline_cell.and_then(|(w, p)| {
            cells
                .iter()
                .find(|c| c.n_worker == w && c.n_prefetch == p)
                .and_then(|c| c.metric(class))
        });
        let gain_percent = baseline_secs.and_then(|b| time_gain(optimal_secs, b).ok());
        let speedup_v = baseline_secs.and_then(|b| speedup(b, optimal_secs).ok());
        rows.push(SummaryRow {
            epoch_class: class,
            n_worker: cells[best_idx].n_worker,
            n_prefetch: cells[best_idx].n_prefetch,
            optimal_secs,
            baseline_secs,
            gain_percent,
            speedup: speedup_v,
        });
    }
    rows
}

pub fn summary_csv_text(rows: &[SummaryRow]) -> String {
    let mut text = String::from(SUMMARY_CSV_HEADER);
    text.push('\n');
    for r in rows {
        let opt = |v: Option<f64>, digits: usize| match v {
            Some(v) => format!("{v:.digits$}"),
            None => String::new(),
        };
        text.push_str(&format!(
            "{},{},{},{:.9},{},{},{}\n",
            r.epoch_class,
            r.n_worker,
            r.n_prefetch,
            r.optimal_secs,
            opt(r.baseline_secs, 9),
            opt(r.gain_percent, 2),
            opt(r.speedup, 2),
        ));
    }
    text
}

/// Paths of the files [`emit`] wrote.
pub struct Emitted {
    pub normalized_path: PathBuf,
    pub summary_path: PathBuf,
    pub normalized: NormalizeOutput,
    pub summary: Vec<SummaryRow>,
}

/// Writes the derived views of a measured grid into `run_dir`:
/// `normalized.csv` and `summary.csv`.
pub fn emit(
    run_dir: &Path,
    records: &[GridRecord],
    baseline_cell: Option<(usize, usize)>,
) -> Result<Emitted> {
    let normalized = normalize_by_prefetch(records);
    let normalized_path = run_dir.join("normalized.csv");
    write_normalized_csv(&normalized_path, &normalized)?;

    let summary = summarize(records, baseline_cell);
    let summary_path = run_dir.join("summary.csv");
    fs::write(&summary_path, summary_csv_text(&summary)).map_err(|e| Error::io(&summary_path, e))?;
    Ok(Emitted {
        normalized_path,
        summary_path,
        normalized,
        summary,
    })
}
