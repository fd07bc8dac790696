//! Disk-based epsilon similarity self-join over flat vector files.
//!
//! The pipeline groups vectors into buckets stored contiguously on disk,
//! links bucket pairs that may hold epsilon pairs, orders the pair tasks for
//! cache locality, plans evictions offline and then executes the plan with
//! aligned direct reads under a fixed memory budget.

pub mod bucketize;
pub mod codec;
pub mod config;
pub mod dataset;
pub mod direct_io;
pub mod error;
pub mod executor;
pub mod graph_io;
pub mod index_file;
pub mod memory;
pub mod oracle;
pub mod orchestrate;
pub mod pipeline;
pub mod results;
pub mod stats;

pub use error::{Error, Result};
pub use ssjoin_core as core;
