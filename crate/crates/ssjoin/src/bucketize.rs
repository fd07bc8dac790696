//! Three-pass bucketization: sample centers, assign every vector to its
//! nearest center, then write a bucket-major file with one page-aligned
//! extent per bucket.

use std::fs::{self, OpenOptions};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use ssjoin_core::bucket::{extent_bytes, max_records_within, plan_extents, record_bytes, Bucket, Extent};
use ssjoin_core::hnsw::{CenterIndex, IndexParams, SearchScratch};
use ssjoin_core::sample::sample_ids;
use ssjoin_core::verify::PayloadRef;
use ssjoin_core::PAGE_SIZE;

use crate::codec::{open_decoder, temp_path, write_atomic};
use crate::dataset::{rows_per_block, stream_blocks, DatasetHandle};
use crate::direct_io::{AlignedBuf, DirectReader};
use crate::error::{Error, IoContext, Result};
use crate::memory::MemoryAccountant;

/// Per-center write buffer; flushed in whole quanta.
pub const BUFFER_QUANTUM: u64 = 8192;

const META_MAGIC: &[u8; 8] = b"SSJBKM\0\0";
const META_VERSION: u32 = 1;

/// Roughly one center per thousand vectors.
pub fn default_num_centers(n: u64) -> u64 {
    ((n as f64 / 1000.0).round() as u64).max(1)
}

/// The dataset rows at `sample_ids(N, M, seed)`, gathered in one sequential pass.
pub fn select_centers(handle: &DatasetHandle, m: u64, seed: u64, block_bytes: u64) -> Result<Vec<f32>> {
    let ids = sample_ids(handle.count, m, seed)?;
    let mut out = Vec::with_capacity(ids.len() * handle.dim);
    let mut next = 0usize;
    for block in stream_blocks(handle, block_bytes)? {
        let block = block?;
        let end = block.start_id + block.len() as u64;
        while next < ids.len() && ids[next] < end {
            out.extend_from_slice(block.row((ids[next] - block.start_id) as usize));
            next += 1;
        }
        if next == ids.len() {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub memory_budget: u64,
    /// Largest padded extent a bucket may have; bigger groups are split.
    pub max_bucket_bytes: Option<u64>,
    pub block_bytes: u64,
    pub ef_search: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayoutStats {
    /// Every byte written by the layout, including padding.
    pub bytes_written: u64,
    /// `N * record_bytes`.
    pub payload_bytes: u64,
    /// Sum of padded extents.
    pub padded_bytes: u64,
    pub peak_memory: u64,
    /// Rows per streaming block that were used.
    pub block_rows: u64,
    /// Whether assignments were recomputed in the write pass instead of kept.
    pub reassigned: bool,
}

impl LayoutStats {
    pub fn write_amplification(&self) -> f64 {
        self.bytes_written as f64 / self.padded_bytes.max(1) as f64
    }
}

/// A bucket's decoded records.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketPayload {
    pub bucket: u32,
    pub dim: usize,
    pub ids: Vec<u64>,
    pub vectors: Vec<f32>,
}

impl BucketPayload {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn as_ref(&self) -> PayloadRef<'_> {
        PayloadRef::new(&self.ids, &self.vectors, self.dim)
    }
}

/// Bucket-major data file plus its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketStore {
    pub data_path: PathBuf,
    pub count: u64,
    pub dim: usize,
    pub buckets: Vec<Bucket>,
    /// Bucket ids per center, in extent order.
    pub group_buckets: Vec<Vec<u32>>,
}

impl BucketStore {
    pub fn num_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_buckets.len()
    }

    pub fn record_bytes(&self) -> u64 {
        record_bytes(self.dim)
    }

    /// Radius per center (shared by its sub-buckets).
    pub fn group_radii(&self) -> Vec<f32> {
        self.group_buckets
            .iter()
            .map(|bs| bs.first().map_or(0.0, |&b| self.buckets[b as usize].radius))
            .collect()
    }

    pub fn group_counts(&self) -> Vec<u64> {
        self.group_buckets
            .iter()
            .map(|bs| bs.iter().map(|&b| self.buckets[b as usize].count).sum())
            .collect()
    }

    pub fn bucket_counts(&self) -> Vec<u64> {
        self.buckets.iter().map(|b| b.count).collect()
    }

    pub fn max_extent_bytes(&self) -> u64 {
        self.buckets.iter().map(|b| b.extent.length).max().unwrap_or(0)
    }

    pub fn total_extent_bytes(&self) -> u64 {
        self.buckets.iter().map(|b| b.extent.length).sum()
    }

    /// One aligned read of the bucket's extent, decoded and checked.
    pub fn read_bucket(&self, id: u32, reader: &mut DirectReader, buf: &mut AlignedBuf) -> Result<BucketPayload> {
        let bucket = self
            .buckets
            .get(id as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("bucket {id} out of range")))?;
        if bucket.extent.length == 0 {
            return decode_bucket(bucket, &[], self.dim, self.count);
        }
        let raw = reader.read_extent(bucket.extent.offset, bucket.extent.length, buf)?;
        decode_bucket(bucket, raw, self.dim, self.count)
    }

    /// Original id of every record slot, in file order.
    pub fn id_map(&self) -> Result<Vec<u64>> {
        let mut reader = DirectReader::open(&self.data_path, true)?;
        let mut buf = AlignedBuf::default();
        let mut order: Vec<&Bucket> = self.buckets.iter().collect();
        order.sort_by_key(|b| b.extent.offset);
        let mut out = Vec::with_capacity(self.count as usize);
        for b in order {
            out.extend(self.read_bucket(b.id, &mut reader, &mut buf)?.ids);
        }
        Ok(out)
    }

    pub fn save_meta(&self, path: &Path) -> Result<()> {
        let data_name = self
            .data_path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::InvalidArgument("data path has no file name".into()))?
            .to_string();
        write_atomic(path, |e| {
            e.bytes(META_MAGIC)?;
            e.u32(META_VERSION)?;
            e.u64(self.count)?;
            e.u32(self.dim as u32)?;
            e.u32(self.num_groups() as u32)?;
            e.u32(self.num_buckets() as u32)?;
            e.u32(data_name.len() as u32)?;
            e.bytes(data_name.as_bytes())?;
            for b in &self.buckets {
                e.u32(b.group)?;
                e.u64(b.count)?;
                e.u64(b.extent.offset)?;
                e.u64(b.extent.length)?;
                e.f32(b.radius)?;
            }
            for bs in &self.group_buckets {
                let center = bs.first().map(|&b| self.buckets[b as usize].center.as_slice());
                match center {
                    Some(c) => e.f32s(c)?,
                    None => e.f32s(&vec![0.0; self.dim])?,
                }
            }
            Ok(())
        })
    }

    /// Loads metadata; the data file is expected next to it.
    pub fn load(meta_path: &Path) -> Result<BucketStore> {
        let mut d = open_decoder(meta_path)?;
        d.header(META_MAGIC, META_VERSION)?;
        let count = d.u64()?;
        let dim = d.u32()? as usize;
        let groups = d.u32()? as usize;
        let nb = d.u32()? as usize;
        let name_len = d.u32()? as usize;
        if dim == 0 || name_len > 4096 {
            return Err(d.bad("implausible header"));
        }
        let mut name = vec![0u8; name_len];
        for byte in name.iter_mut() {
            *byte = d.u8()?;
        }
        let name = String::from_utf8(name).map_err(|_| d.bad("data file name is not utf-8"))?;
        let mut buckets = Vec::with_capacity(nb);
        let mut group_buckets = vec![Vec::new(); groups];
        for id in 0..nb as u32 {
            let group = d.u32()?;
            let bcount = d.u64()?;
            let offset = d.u64()?;
            let length = d.u64()?;
            let radius = d.f32()?;
            if group as usize >= groups {
                return Err(d.bad("bucket refers to a missing center"));
            }
            group_buckets[group as usize].push(id);
            buckets.push(Bucket { id, group, center: Vec::new(), radius, count: bcount, extent: Extent { offset, length } });
        }
        let mut centers = Vec::with_capacity(groups);
        for _ in 0..groups {
            centers.push(d.f32s(dim)?);
        }
        d.finish()?;
        for b in &mut buckets {
            b.center = centers[b.group as usize].clone();
        }
        let store = BucketStore {
            data_path: meta_path.with_file_name(name),
            count,
            dim,
            buckets,
            group_buckets,
        };
        store.check_layout()?;
        Ok(store)
    }

    /// Counts sum to N; extents are aligned, sized for their counts and disjoint.
    pub fn check_layout(&self) -> Result<()> {
        let total: u64 = self.buckets.iter().map(|b| b.count).sum();
        if total != self.count {
            return Err(Error::InvalidArgument(format!("bucket counts sum to {total}, expected {}", self.count)));
        }
        let mut spans: Vec<Extent> = Vec::with_capacity(self.buckets.len());
        for b in &self.buckets {
            let e = b.extent;
            if e.offset % PAGE_SIZE != 0 || e.length != extent_bytes(b.count, self.dim) {
                return Err(Error::CorruptExtent { bucket: b.id, reason: "extent misaligned or mis-sized".into() });
            }
            spans.push(e);
        }
        spans.sort_by_key(|e| e.offset);
        if spans.windows(2).any(|w| w[0].offset + w[0].length > w[1].offset) {
            return Err(Error::InvalidArgument("bucket extents overlap".into()));
        }
        Ok(())
    }
}

fn decode_bucket(bucket: &Bucket, raw: &[u8], dim: usize, n: u64) -> Result<BucketPayload> {
    let corrupt = |reason: String| Error::CorruptExtent { bucket: bucket.id, reason };
    let rec = record_bytes(dim) as usize;
    let used = bucket.count as usize * rec;
    if raw.len() as u64 != extent_bytes(bucket.count, dim) {
        return Err(corrupt(format!("read {} bytes, metadata implies {}", raw.len(), extent_bytes(bucket.count, dim))));
    }
    if raw[used..].iter().any(|&b| b != 0) {
        return Err(corrupt(format!("data past the {} recorded vectors", bucket.count)));
    }
    let mut ids = Vec::with_capacity(bucket.count as usize);
    let mut vectors = Vec::with_capacity(bucket.count as usize * dim);
    for r in raw[..used].chunks_exact(rec) {
        let id = u64::from_le_bytes(r[..8].try_into().unwrap());
        if id >= n {
            return Err(corrupt(format!("record id {id} outside [0, {n})")));
        }
        ids.push(id);
        vectors.extend(r[8..].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
    }
    Ok(BucketPayload { bucket: bucket.id, dim, ids, vectors })
}

fn index_bytes(index: &CenterIndex) -> u64 {
    let adjacency: usize = index.layers().iter().flatten().map(|l| l.len() * 4 + 24).sum();
    (index.centers().len() * 4 + index.len() + adjacency) as u64
}

/// Bytes the layout needs besides the streaming block: the index, per-center
/// buffers and bookkeeping, search scratch and writer buffers.
pub fn layout_overhead(index: &CenterIndex, dim: usize) -> u64 {
    let m = index.len() as u64;
    let per_center = BUFFER_QUANTUM + record_bytes(dim) + 64;
    let scratch = m * 4 * rayon::current_num_threads() as u64;
    index_bytes(index) + m * per_center + scratch + (64 << 10)
}

/// Assigns every vector to its nearest center and writes the bucket-major
/// file `data_path` plus `meta_path`. Memory use is charged to an accountant
/// capped at `params.memory_budget`.
pub fn assign_and_layout(
    handle: &DatasetHandle,
    index: &CenterIndex,
    params: &LayoutParams,
    data_path: &Path,
    meta_path: &Path,
) -> Result<(BucketStore, LayoutStats)> {
    let tmp = temp_path(data_path);
    let result = layout_inner(handle, index, params, data_path, &tmp, meta_path);
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn layout_inner(
    handle: &DatasetHandle,
    index: &CenterIndex,
    params: &LayoutParams,
    data_path: &Path,
    tmp: &Path,
    meta_path: &Path,
) -> Result<(BucketStore, LayoutStats)> {
    if index.dim() != handle.dim {
        return Err(Error::InvalidArgument("index and dataset dimensions differ".into()));
    }
    let dim = handle.dim;
    let m = index.len();
    let rec = record_bytes(dim);
    let acc = MemoryAccountant::new(params.memory_budget);
    let infeasible = |reason: String| Error::BudgetInfeasible { budget: params.memory_budget, reason };

    let overhead = layout_overhead(index, dim);
    let _fixed = acc
        .reserve(overhead)
        .map_err(|_| infeasible(format!("{m} centers need {overhead} bytes of index and buffers")))?;
    // block: raw read + decoded floats + one assignment per row
    let per_row = handle.stored_row_bytes() + 4 * dim as u64 + 8;
    let spare = params.memory_budget - overhead;
    let widest = handle.stored_row_bytes().max(4 * dim as u64);
    let rows_fit = spare / per_row;
    let min_rows = PAGE_SIZE.div_ceil(widest).max(1);
    if rows_fit < min_rows {
        return Err(infeasible(format!("no room for a {}-byte streaming block", min_rows * per_row)));
    }
    let block_rows = rows_per_block(handle, params.block_bytes)?.min(rows_fit);
    let block_bytes = block_rows * widest;
    let _block = acc.reserve(block_rows * per_row)?;

    // keep all assignments in memory when they fit, else recompute them
    let keep = acc.reserve(handle.count * 4).ok();
    let mut assignments: Vec<u32> = Vec::new();
    if keep.is_some() {
        assignments.reserve_exact(handle.count as usize);
    }

    let assign_block = |vectors: &[f32]| -> Vec<(u32, f32)> {
        vectors
            .par_chunks(dim)
            .map_init(SearchScratch::default, |s, v| index.nearest_sq(s, v, params.ef_search))
            .collect()
    };

    let mut counts = vec![0u64; m];
    let mut max_sq = vec![0f32; m];
    for block in stream_blocks(handle, block_bytes)? {
        let block = block?;
        for (g, d2) in assign_block(&block.vectors) {
            counts[g as usize] += 1;
            max_sq[g as usize] = max_sq[g as usize].max(d2);
            if keep.is_some() {
                assignments.push(g);
            }
        }
    }

    let max_records = match params.max_bucket_bytes {
        Some(b) => {
            let r = max_records_within(b, dim);
            if r == 0 {
                return Err(infeasible(format!("a bucket of {b} bytes cannot hold one {rec}-byte record")));
            }
            Some(r)
        }
        None => None,
    };
    let planned = plan_extents(&counts, dim, max_records);
    let mut buckets = Vec::with_capacity(planned.len());
    let mut group_buckets = vec![Vec::new(); m];
    for (id, &(group, count, extent)) in planned.iter().enumerate() {
        group_buckets[group as usize].push(id as u32);
        buckets.push(Bucket {
            id: id as u32,
            group,
            center: index.center(group).to_vec(),
            radius: max_sq[group as usize].sqrt(),
            count,
            extent,
        });
    }
    let total: u64 = buckets.iter().map(|b| b.extent.length).sum();

    let file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(true)
        .open(tmp)
        .at(tmp)?;
    file.set_len(total).at(tmp)?;
    let mut written = 0u64;
    let mut write_at = |bytes: &[u8], offset: u64| -> Result<()> {
        debug_assert!(offset % PAGE_SIZE == 0 && bytes.len() as u64 % PAGE_SIZE == 0);
        file.write_all_at(bytes, offset).at(tmp)?;
        written += bytes.len() as u64;
        Ok(())
    };

    struct Cursor {
        chain: usize,
        records: u64,
        flushed: u64,
        buf: Vec<u8>,
    }
    let mut cursors: Vec<Cursor> = (0..m)
        .map(|_| Cursor { chain: 0, records: 0, flushed: 0, buf: Vec::new() })
        .collect();
    let mut pos = 0usize;
    for block in stream_blocks(handle, block_bytes)? {
        let block = block?;
        let fresh;
        let groups: Box<dyn Iterator<Item = u32>> = if keep.is_some() {
            let slice = &assignments[pos..pos + block.len()];
            Box::new(slice.iter().copied())
        } else {
            fresh = assign_block(&block.vectors);
            Box::new(fresh.iter().map(|&(g, _)| g))
        };
        for (i, g) in groups.enumerate() {
            let id = block.start_id + i as u64;
            let c = &mut cursors[g as usize];
            let bucket = &buckets[group_buckets[g as usize][c.chain] as usize];
            if c.buf.capacity() == 0 {
                c.buf.reserve_exact((BUFFER_QUANTUM + rec) as usize);
            }
            c.buf.extend_from_slice(&id.to_le_bytes());
            for &x in block.row(i) {
                c.buf.extend_from_slice(&x.to_le_bytes());
            }
            c.records += 1;
            if c.buf.len() as u64 >= BUFFER_QUANTUM {
                write_at(&c.buf[..BUFFER_QUANTUM as usize], bucket.extent.offset + c.flushed)?;
                c.flushed += BUFFER_QUANTUM;
                c.buf.drain(..BUFFER_QUANTUM as usize);
            }
            if c.records == bucket.count {
                if !c.buf.is_empty() {
                    let padded = c.buf.len().div_ceil(PAGE_SIZE as usize) * PAGE_SIZE as usize;
                    c.buf.resize(padded, 0);
                    write_at(&c.buf, bucket.extent.offset + c.flushed)?;
                    c.flushed += padded as u64;
                    c.buf.clear();
                }
                debug_assert_eq!(c.flushed, bucket.extent.length);
                c.chain += 1;
                c.records = 0;
                c.flushed = 0;
            }
        }
        pos += block.len();
    }
    drop(cursors);
    file.sync_all().at(tmp)?;
    drop(file);
    fs::rename(tmp, data_path).at(data_path)?;

    let store = BucketStore {
        data_path: data_path.to_path_buf(),
        count: handle.count,
        dim,
        buckets,
        group_buckets,
    };
    store.check_layout()?;
    store.save_meta(meta_path)?;
    let reassigned = keep.is_none();
    drop(keep);
    let stats = LayoutStats {
        bytes_written: written,
        payload_bytes: handle.count * rec,
        padded_bytes: total,
        peak_memory: acc.peak(),
        block_rows,
        reassigned,
    };
    Ok((store, stats))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketizeParams {
    pub num_centers: u64,
    pub seed: u64,
    pub index: IndexParams,
    pub layout: LayoutParams,
}

/// Center selection, index construction and layout in one call.
pub fn bucketize(
    handle: &DatasetHandle,
    params: &BucketizeParams,
    data_path: &Path,
    meta_path: &Path,
) -> Result<(CenterIndex, BucketStore, LayoutStats)> {
    let widest = handle.stored_row_bytes().max(4 * handle.dim as u64);
    let block = params.layout.block_bytes.min(params.layout.memory_budget / 4).max(PAGE_SIZE.max(widest));
    let centers = select_centers(handle, params.num_centers, params.seed, block)?;
    let index = CenterIndex::build(&centers, handle.dim, params.index, params.seed)?;
    let (store, stats) = assign_and_layout(handle, &index, &params.layout, data_path, meta_path)?;
    Ok((index, store, stats))
}
