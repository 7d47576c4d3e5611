//! Parallel prefetching dataloader with deterministic timing emulation and a
//! grid-search parameter tuner.
//!
//! The crate models the four stages of a training-input pipeline (load,
//! transform, shuffle/batch, prefetch) over a synthetic on-disk dataset.
//! Reads go through a byte-budgeted LRU cache emulator standing in for the
//! OS page cache, so cold and warm epochs have reproducible costs. An epoch
//! can run in *virtual* mode (exact integer-time schedule, no threads) or in
//! *realtime* mode (real worker threads charging the same costs as busy
//! waits). On top of the loader, [`tuner::dpt_search`] grid-searches worker
//! count and prefetch factor to minimize transfer time under host and
//! consumer memory budgets, and [`report`] post-processes measured grids
//! into normalized and summary tables.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod loader;
pub mod pipeline;
pub mod report;
pub mod tuner;
pub mod units;

pub use error::{Error, Result};
pub use units::Picos;
