//! Core algorithms for a memory-budgeted vector similarity self-join.
//!
//! Everything in this crate works on in-memory slices and needs only `alloc`:
//!
//! * [`distance`] - squared / plain L2 kernels.
//! * [`sample`] - seeded sampling of distinct vector ids.
//! * [`hnsw`] - proximity-graph index over bucket centers.
//! * [`bucket`] - bucket metadata and page arithmetic.
//! * [`graph`] - candidate buckets, triangle filter, probabilistic pruning and
//!   the bucket dependency graph.
//! * [`reorder`] / [`schedule`] - sliding-window node reordering and the task
//!   order it induces.
//! * [`cache`] - offline optimal (farthest-next-use) eviction planning and
//!   LRU/FIFO simulation.
//! * [`mecc`] - exhaustive minimum load sequence for tiny graphs.
//! * [`verify`] - exact pair verification between two bucket payloads.
//! * [`eval`] - pair sets, recall and in-memory brute-force joins.
//!
//! File formats, direct I/O and the command line live in the `ssjoin` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bucket;
pub mod cache;
pub mod distance;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod graph;
pub mod hnsw;
pub mod mecc;
pub mod reorder;
pub mod sample;
pub mod schedule;
pub mod verify;

pub use error::Error;

/// Page size used for every on-disk extent.
pub const PAGE_SIZE: u64 = 4096;
