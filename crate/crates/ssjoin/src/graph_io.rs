//! Parallel bucket-graph construction, the `.bdg` file and the per-center
//! candidate statistics CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use ssjoin_core::fingerprint::Fnv;
use ssjoin_core::graph::{expand_groups, group_candidates, BucketGraph, CandidateStats, GraphParams};
use ssjoin_core::hnsw::{CenterIndex, SearchScratch};

use crate::bucketize::BucketStore;
use crate::codec::{open_decoder, write_atomic};
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"SSJBDG\0\0";
const VERSION: u32 = 1;

/// Identity of a bucket store's layout, used to tie graphs and plans to it.
pub fn store_key(store: &BucketStore) -> u64 {
    let mut h = Fnv::new();
    h.write_u64(store.count);
    h.write_u64(store.dim as u64);
    h.write_u64(store.num_groups() as u64);
    for b in &store.buckets {
        h.write_u64(b.group as u64);
        h.write_u64(b.count);
        h.write_u64(b.extent.offset);
        h.write_u64(b.extent.length);
        h.write(&b.radius.to_le_bytes());
    }
    h.finish()
}

/// Settings a graph was built with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphMeta {
    pub epsilon: f32,
    pub lambda: f64,
    pub apply_mu: bool,
    pub store_key: u64,
}

/// Candidate search, triangle filter and pruning for every center in
/// parallel, expanded to the store's physical buckets.
pub fn build_bucket_graph(
    index: &CenterIndex,
    store: &BucketStore,
    params: &GraphParams,
) -> Result<(BucketGraph, Vec<CandidateStats>)> {
    if index.len() != store.num_groups() {
        return Err(Error::InvalidArgument(format!(
            "index has {} centers but the store has {}",
            index.len(),
            store.num_groups()
        )));
    }
    let radii = store.group_radii();
    let counts = store.group_counts();
    let (kept, stats): (Vec<_>, Vec<_>) = (0..index.len() as u32)
        .into_par_iter()
        .map_init(SearchScratch::default, |s, g| group_candidates(index, s, &radii, &counts, g, params))
        .unzip();
    let truncated = stats.iter().filter(|s| s.truncated).count();
    if truncated > 0 {
        log::warn!("{truncated} centers still had triangle-passing candidates at the widest search; lists may be cut short");
    }
    Ok((expand_groups(&kept, &store.group_buckets, store.num_buckets()), stats))
}

pub fn save_graph(graph: &BucketGraph, meta: &GraphMeta, path: &Path) -> Result<()> {
    write_atomic(path, |e| {
        e.bytes(MAGIC)?;
        e.u32(VERSION)?;
        e.u32(graph.num_nodes() as u32)?;
        e.f32(meta.epsilon)?;
        e.f64(meta.lambda)?;
        e.u8(meta.apply_mu as u8)?;
        e.u8(graph.self_check() as u8)?;
        e.u64(meta.store_key)?;
        e.u64(graph.num_edges() as u64)?;
        let mut offset = 0u64;
        e.u64(offset)?;
        for list in graph.adjacency() {
            offset += list.len() as u64;
            e.u64(offset)?;
        }
        for list in graph.adjacency() {
            e.u32s(list)?;
        }
        e.u64(graph.fingerprint())
    })
}

pub fn load_graph(path: &Path) -> Result<(BucketGraph, GraphMeta)> {
    let mut d = open_decoder(path)?;
    d.header(MAGIC, VERSION)?;
    let n = d.u32()? as usize;
    let epsilon = d.f32()?;
    let lambda = d.f64()?;
    let apply_mu = d.u8()? != 0;
    let self_check = d.u8()? != 0;
    let store_key = d.u64()?;
    let edges = d.u64()?;
    let offsets = (0..=n).map(|_| d.u64()).collect::<Result<Vec<u64>>>()?;
    if offsets[0] != 0 || offsets[n] != edges || offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(d.bad("offsets are not a valid CSR index"));
    }
    let mut adjacency = Vec::with_capacity(n);
    for w in offsets.windows(2) {
        adjacency.push(d.u32s((w[1] - w[0]) as usize)?);
    }
    let fp = d.u64()?;
    let graph = BucketGraph::from_adjacency(adjacency, self_check)
        .ok_or_else(|| d.bad("adjacency lists are not sorted upper-triangular sets"))?;
    if graph.fingerprint() != fp {
        return Err(d.bad("fingerprint mismatch"));
    }
    d.finish()?;
    Ok((graph, GraphMeta { epsilon, lambda, apply_mu, store_key }))
}

pub fn write_stats_csv(stats: &[CandidateStats], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    let body = (|| -> std::io::Result<()> {
        writeln!(w, "center,search_width,candidates,after_triangle,after_prune,truncated")?;
        for s in stats {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.group, s.width, s.candidates, s.after_triangle, s.after_prune, s.truncated as u8
            )?;
        }
        w.flush()
    })();
    body.at(path)
}
