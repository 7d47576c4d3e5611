//! Per-epoch sample pipeline: permutation, batching, transform, collation.
//!
//! Everything here is a pure function of its inputs and a seed. The epoch
//! permutation is a seeded Fisher-Yates shuffle, so a (seed, epoch) pair
//! names one exact item order on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::units::Picos;

/// splitmix64 finalizer; the standard mixer for deriving stream seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent stream seed from a base seed, so one user-facing
/// seed can drive many decorrelated random streams (per epoch, per item).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(stream)))
}

/// Item order for one epoch: the identity order, or a seeded Fisher-Yates
/// permutation of `0..item_count` when `shuffle` is set.
pub fn make_permutation(item_count: usize, seed: u64, shuffle: bool) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..item_count as u32).collect();
    if !shuffle {
        return ids;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        ids.swap(i, j);
    }
    ids
}

/// Splits a permutation into consecutive batches of `batch_size` ids. With
/// `drop_last` a trailing partial batch is discarded, otherwise it is kept.
pub fn partition_batches(
    permutation: &[u32],
    batch_size: usize,
    drop_last: bool,
) -> Result<Vec<Vec<u32>>> {
    if batch_size == 0 {
        return Err(Error::Usage("batch size must be positive".into()));
    }
    let mut batches: Vec<Vec<u32>> = permutation
        .chunks(batch_size)
        .map(|c| c.to_vec())
        .collect();
    if drop_last {
        if let Some(last) = batches.last() {
            if last.len() < batch_size {
                batches.pop();
            }
        }
    }
    Ok(batches)
}

/// Cost model for the transform step: a flat per-item charge plus a
/// per-byte charge on the raw payload.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransformCost {
    pub per_item: Picos,
    pub per_byte: Picos,
}

impl TransformCost {
    pub fn zero() -> TransformCost {
        TransformCost::default()
    }

    pub fn cost(&self, byte_size: u64) -> Picos {
        self.per_item + self.per_byte * byte_size
    }
}

/// Applies the deterministic sample transform and returns the prepared
/// payload with its simulated cost.
///
/// The transform is a fixed position-dependent byte mapping: cheap, pure,
/// and order-sensitive, so any reordering or corruption upstream changes
/// the output.
pub fn transform_item(raw: Vec<u8>, cost: &TransformCost) -> (Vec<u8>, Picos) {
    let elapsed = cost.cost(raw.len() as u64);
    let mut out = raw;
    for (i, b) in out.iter_mut().enumerate() {
        *b = b.wrapping_add((i as u8).wrapping_mul(31)).rotate_left(3);
    }
    (out, elapsed)
}

/// One transformed sample ready for collation.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: u32,
    pub payload: Vec<u8>,
    /// Simulated time spent loading and transforming this sample.
    pub elapsed: Picos,
}

/// A collated batch as handed from a worker to the dispatcher.
#[derive(Clone, Debug)]
pub struct Batch {
    /// Position of this batch in the epoch's batch order.
    pub seq: u32,
    pub item_ids: Vec<u32>,
    /// Sample payloads concatenated in batch order.
    pub payload: Vec<u8>,
    /// Total simulated time the owning worker spent producing the batch.
    pub produce_elapsed: Picos,
}

impl Batch {
    pub fn payload_bytes(&self) -> u64 {
        self.payload.len() as u64
    }
}

/// Collates transformed samples into one batch, concatenating payloads in
/// sample order and summing per-sample costs.
pub fn collate(samples: Vec<Sample>, seq: u32) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Usage("cannot collate an empty batch".into()));
    }
    let total_len: usize = samples.iter().map(|s| s.payload.len()).sum();
    let mut payload = Vec::with_capacity(total_len);
    let mut item_ids = Vec::with_capacity(samples.len());
    let mut produce_elapsed = Picos::ZERO;
    for sample in samples {
        item_ids.push(sample.id);
        payload.extend_from_slice(&sample.payload);
        produce_elapsed += sample.elapsed;
    }
    Ok(Batch {
        seq,
        item_ids,
        payload,
        produce_elapsed,
    })
}

/// The fixed per-epoch plan: which items go in which batch.
#[derive(Clone, Debug)]
pub struct EpochPlan {
    pub epoch_index: u64,
    pub permutation: Vec<u32>,
    pub batches: Vec<Vec<u32>>,
}

impl EpochPlan {
    /// Builds the plan for one epoch. The effective shuffle seed is derived
    /// from (seed, epoch_index), so successive epochs reshuffle while a
    /// fixed pair replays exactly.
    pub fn build(
        item_count: usize,
        batch_size: usize,
        shuffle: bool,
        drop_last: bool,
        seed: u64,
        epoch_index: u64,
    ) -> Result<EpochPlan> {
        let permutation = make_permutation(item_count, mix_seed(seed, epoch_index), shuffle);
        let batches = partition_batches(&permutation, batch_size, drop_last)?;
        Ok(EpochPlan {
            epoch_index,
            permutation,
            batches,
        })
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }
}
