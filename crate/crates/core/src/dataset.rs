//! Synthetic datasets on disk plus a deterministic storage/cache emulator.
//!
//! A dataset is a directory of small binary item files described by a JSONL
//! manifest. Item payloads are seeded pseudorandom bytes, so generation is
//! reproducible and batch contents can be compared byte for byte across
//! runs. Reads are charged through [`CacheEmulator`], an LRU cache with a
//! byte budget standing in for the OS page cache: a resident item costs the
//! hit latency, anything else costs the storage latency and is admitted,
//! evicting least-recently-used items until it fits.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::mix_seed;
use crate::units::Picos;

/// Seed-mixing stream tag for item payload generation, so payload streams
/// never collide with shuffle streams derived from the same user seed.
const ITEM_PAYLOAD_STREAM: u64 = 0x4954_454d_5354_524d;

/// One dataset item as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: u32,
    #[serde(rename = "bytes")]
    pub byte_size: u64,
    pub path: String,
    pub label: u32,
}

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    item_count: usize,
    total_bytes: u64,
    spec_fingerprint: String,
}

/// In-memory view of a dataset manifest.
///
/// Items are dense: item `i` is at index `i`. `root` is the directory item
/// paths are resolved against.
#[derive(Clone, Debug)]
pub struct Manifest {
    items: Vec<ItemRecord>,
    total_bytes: u64,
    spec_fingerprint: String,
    root: PathBuf,
}

impl Manifest {
    /// Builds a manifest from records, validating the dataset invariants:
    /// ids dense and ascending from zero, paths unique, sizes positive.
    pub fn new(items: Vec<ItemRecord>, spec_fingerprint: String, root: PathBuf) -> Result<Manifest> {
        let mut paths = BTreeSet::new();
        let mut total_bytes: u64 = 0;
        for (i, item) in items.iter().enumerate() {
            if item.id as usize != i {
                return Err(Error::DatasetIntegrity(format!(
                    "item at index {i} has id {}, ids must be dense from 0",
                    item.id
                )));
            }
            if item.byte_size == 0 {
                return Err(Error::DatasetIntegrity(format!("item {} has zero size", item.id)));
            }
            if !paths.insert(item.path.as_str()) {
                return Err(Error::DatasetIntegrity(format!(
                    "duplicate item path {:?}",
                    item.path
                )));
            }
            total_bytes = total_bytes.saturating_add(item.byte_size);
        }
        Ok(Manifest {
            items,
            total_bytes,
            spec_fingerprint,
            root,
        })
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn item_count(&self) -> usize {
        self.items.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_bytes
    }

    pub fn spec_fingerprint(&self) -> &str {
        &self.spec_fingerprint
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn item(&self, id: u32) -> Result<&ItemRecord> {
        self.items
            .get(id as usize)
            .ok_or_else(|| Error::Usage(format!("item id {id} out of range (dataset has {} items)", self.items.len())))
    }

    /// Largest single item size; zero for an empty dataset.
    pub fn max_item_bytes(&self) -> u64 {
        self.items.iter().map(|i| i.byte_size).max().unwrap_or(0)
    }

    pub fn item_path(&self, item: &ItemRecord) -> PathBuf {
        self.root.join(&item.path)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    /// Writes `manifest.jsonl` under the manifest root: one header line,
    /// then one line per item.
    pub fn save(&self) -> Result<()> {
        let path = self.manifest_path();
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        let header = ManifestHeader {
            item_count: self.items.len(),
            total_bytes: self.total_bytes,
            spec_fingerprint: self.spec_fingerprint.clone(),
        };
        let mut write_line = |line: String| -> Result<()> {
            w.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))
        };
        write_line(serde_json::to_string(&header).expect("header serializes"))?;
        for item in &self.items {
            write_line(serde_json::to_string(item).expect("item serializes"))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Loads and validates `manifest.jsonl` from a dataset directory (or the
    /// manifest file itself).
    pub fn load(path: &Path) -> Result<Manifest> {
        let (root, file_path) = if path.is_dir() {
            (path.to_path_buf(), path.join("manifest.jsonl"))
        } else {
            (
                path.parent().unwrap_or(Path::new(".")).to_path_buf(),
                path.to_path_buf(),
            )
        };
        let file = fs::File::open(&file_path).map_err(|e| Error::io(&file_path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();

        let (_, first) = lines.next().ok_or_else(|| Error::Format {
            path: file_path.clone(),
            line: 1,
            message: "empty manifest".into(),
        })?;
        let first = first.map_err(|e| Error::io(&file_path, e))?;
        let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| Error::Format {
            path: file_path.clone(),
            line: 1,
            message: format!("bad header: {e}"),
        })?;

        let mut items = Vec::with_capacity(header.item_count);
        for (idx, line) in lines {
            let line = line.map_err(|e| Error::io(&file_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let item: ItemRecord = serde_json::from_str(&line).map_err(|e| Error::Format {
                path: file_path.clone(),
                line: idx + 1,
                message: format!("bad item record: {e}"),
            })?;
            items.push(item);
        }

        if items.len() != header.item_count {
            return Err(Error::DatasetIntegrity(format!(
                "manifest header says {} items but {} records follow",
                header.item_count,
                items.len()
            )));
        }
        let manifest = Manifest::new(items, header.spec_fingerprint, root)?;
        if manifest.total_bytes != header.total_bytes {
            return Err(Error::DatasetIntegrity(format!(
                "manifest header says {} total bytes but items sum to {}",
                header.total_bytes, manifest.total_bytes
            )));
        }
        Ok(manifest)
    }
}

/// Payload size in bytes of a synthetic "image" item: three channels of
/// `resolution` x `resolution` single-byte pixels.
pub fn item_bytes_for_resolution(resolution: u32) -> u64 {
    3 * resolution as u64 * resolution as u64
}

fn dataset_fingerprint(item_count: u32, item_bytes: u64, label_count: u32, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(b"dpt-dataset-v1");
    for v in [item_count as u64, item_bytes, label_count as u64, seed] {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Generates a synthetic dataset under `out_dir`: `item_count` files of
/// `item_bytes` seeded pseudorandom bytes each, labels cycling through
/// `label_count`, plus `manifest.jsonl`. Re-running with the same arguments
/// reproduces every file byte for byte.
pub fn generate_dataset(
    out_dir: &Path,
    item_count: u32,
    item_bytes: u64,
    label_count: u32,
    seed: u64,
) -> Result<Manifest> {
    if item_bytes == 0 {
        return Err(Error::Usage("item size must be positive".into()));
    }
    if label_count == 0 {
        return Err(Error::Usage("label count must be positive".into()));
    }
    let items_dir = out_dir.join("items");
    fs::create_dir_all(&items_dir).map_err(|e| Error::io(&items_dir, e))?;

    let mut items = Vec::with_capacity(item_count as usize);
    let mut payload = vec![0u8; item_bytes as usize];
    for id in 0..item_count {
        let rel = format!("items/{id:08}.bin");
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ ITEM_PAYLOAD_STREAM, id as u64));
        rng.fill_bytes(&mut payload);
        let path = out_dir.join(&rel);
        fs::write(&path, &payload).map_err(|e| Error::io(&path, e))?;
        items.push(ItemRecord {
            id,
            byte_size: item_bytes,
            path: rel,
            label: id % label_count,
        });
    }

    let fingerprint = dataset_fingerprint(item_count, item_bytes, label_count, seed);
    let manifest = Manifest::new(items, fingerprint, out_dir.to_path_buf())?;
    manifest.save()?;
    Ok(manifest)
}

/// Storage and memory access costs charged per read.
///
/// A cache miss costs `miss_seek + miss_per_byte * size`; a hit costs
/// `hit_seek + hit_per_byte * size`. Hit costs must not exceed miss costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatencyModel {
    pub miss_seek: Picos,
    pub miss_per_byte: Picos,
    pub hit_seek: Picos,
    pub hit_per_byte: Picos,
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        if self.hit_seek > self.miss_seek || self.hit_per_byte > self.miss_per_byte {
            return Err(Error::Usage(
                "cache hit latency must not exceed miss latency".into(),
            ));
        }
        Ok(())
    }

    pub fn cost(&self, hit: bool, byte_size: u64) -> Picos {
        if hit {
            self.hit_seek + self.hit_per_byte * byte_size
        } else {
            self.miss_seek + self.miss_per_byte * byte_size
        }
    }

    /// All-zero costs; useful when only ordering matters.
    pub fn zero() -> LatencyModel {
        LatencyModel {
            miss_seek: Picos::ZERO,
            miss_per_byte: Picos::ZERO,
            hit_seek: Picos::ZERO,
            hit_per_byte: Picos::ZERO,
        }
    }
}

impl Default for LatencyModel {
    /// Storage roughly two decimal orders slower than memory.
    fn default() -> LatencyModel {
        LatencyModel {
            miss_seek: Picos::from_micros(100),
            miss_per_byte: Picos::from_nanos(100),
            hit_seek: Picos::from_micros(1),
            hit_per_byte: Picos::from_nanos(1),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    byte_size: u64,
    tick: u64,
}

/// Deterministic LRU cache with a byte budget, standing in for the OS page
/// cache. Only bookkeeping is stored, never payloads.
#[derive(Clone, Debug)]
pub struct CacheEmulator {
    capacity: u64,
    used: u64,
    clock: u64,
    resident: HashMap<u32, Entry>,
    lru: BTreeSet<(u64, u32)>,
    hits: u64,
    misses: u64,
}

impl CacheEmulator {
    pub fn new(capacity: u64) -> CacheEmulator {
        CacheEmulator {
            capacity,
            used: 0,
            clock: 0,
            resident: HashMap::new(),
            lru: BTreeSet::new(),
            hits: 0,
            misses: 0,
        }
    }

    /// Records an access to `id` and returns whether it hit.
    ///
    /// On a miss the item is admitted if it fits the budget at all, evicting
    /// least-recently-used entries until `used + byte_size <= capacity`.
    /// Items larger than the whole budget are never admitted.
    pub fn access(&mut self, id: u32, byte_size: u64) -> bool {
        self.clock += 1;
        if let Some(entry) = self.resident.get_mut(&id) {
            self.hits += 1;
            self.lru.remove(&(entry.tick, id));
            entry.tick = self.clock;
            self.lru.insert((self.clock, id));
            return true;
        }
        self.misses += 1;
        if byte_size <= self.capacity {
            while self.used.saturating_add(byte_size) > self.capacity {
                let oldest = *self.lru.iter().next().expect("used > 0 implies entries");
                self.lru.remove(&oldest);
                let evicted = self.resident.remove(&oldest.1).expect("lru entry is resident");
                self.used -= evicted.byte_size;
            }
            self.resident.insert(
                id,
                Entry {
                    byte_size,
                    tick: self.clock,
                },
            );
            self.lru.insert((self.clock, id));
            self.used += byte_size;
        }
        false
    }

    /// Access plus latency charge in one step.
    pub fn charge(&mut self, id: u32, byte_size: u64, latency: &LatencyModel) -> Picos {
        let hit = self.access(id, byte_size);
        latency.cost(hit, byte_size)
    }

    /// Drops all residency state and zeroes the hit/miss counters. The
    /// capacity is kept.
    pub fn reset(&mut self) {
        self.used = 0;
        self.clock = 0;
        self.resident.clear();
        self.lru.clear();
        self.hits = 0;
        self.misses = 0;
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used_bytes(&self) -> u64 {
        self.used
    }

    pub fn resident_count(&self) -> usize {
        self.resident.len()
    }

    pub fn contains(&self, id: u32) -> bool {
        self.resident.contains_key(&id)
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }
}

/// Drops all cached state, modeling a cold page cache.
pub fn reset_cache(cache: &mut CacheEmulator) {
    cache.reset();
}

/// Reads an item's payload from disk, verifying its size against the
/// manifest, and charges the access through the cache emulator. Returns the
/// payload and the simulated elapsed read time.
pub fn read_item(
    manifest: &Manifest,
    id: u32,
    cache: &mut CacheEmulator,
    latency: &LatencyModel,
) -> Result<(Vec<u8>, Picos)> {
    let record = manifest.item(id)?;
    let payload = load_item_bytes(manifest, record)?;
    let elapsed = cache.charge(id, record.byte_size, latency);
    Ok((payload, elapsed))
}

/// Reads an item file and verifies its size against the manifest, without
/// touching the cache emulator.
pub fn load_item_bytes(manifest: &Manifest, record: &ItemRecord) -> Result<Vec<u8>> {
    let path = manifest.item_path(record);
    let payload = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    if payload.len() as u64 != record.byte_size {
        return Err(Error::DatasetIntegrity(format!(
            "item {} at {} is {} bytes, manifest says {}",
            record.id,
            path.display(),
            payload.len(),
            record.byte_size
        )));
    }
    Ok(payload)
}
