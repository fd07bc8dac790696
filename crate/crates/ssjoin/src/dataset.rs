//! Flat vector files (fbin / fvecs, float32 or uint8), sequential block
//! streaming, indexed row reads and a seeded Gaussian-mixture generator.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use ssjoin_core::fingerprint::Fnv;
use ssjoin_core::sample;

use crate::error::{Error, IoContext, Result};

/// Default streaming block, clipped to the memory budget by callers.
pub const DEFAULT_BLOCK_BYTES: u64 = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elem {
    F32,
    U8,
}

impl Elem {
    pub fn width(self) -> u64 {
        match self {
            Elem::F32 => 4,
            Elem::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `[u32 count][u32 dim]` then the row-major payload.
    Fbin,
    /// Repeated `[i32 dim][payload]`.
    Fvecs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Format {
    pub layout: Layout,
    pub elem: Elem,
}

impl Format {
    pub const FBIN: Format = Format { layout: Layout::Fbin, elem: Elem::F32 };
    pub const U8BIN: Format = Format { layout: Layout::Fbin, elem: Elem::U8 };
    pub const FVECS: Format = Format { layout: Layout::Fvecs, elem: Elem::F32 };
    pub const BVECS: Format = Format { layout: Layout::Fvecs, elem: Elem::U8 };

    pub fn name(self) -> &'static str {
        match (self.layout, self.elem) {
            (Layout::Fbin, Elem::F32) => "fbin",
            (Layout::Fbin, Elem::U8) => "u8bin",
            (Layout::Fvecs, Elem::F32) => "fvecs",
            (Layout::Fvecs, Elem::U8) => "bvecs",
        }
    }

    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Format> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        ext.parse()
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Format> {
        match s.to_ascii_lowercase().as_str() {
            "fbin" => Ok(Format::FBIN),
            "u8bin" => Ok(Format::U8BIN),
            "fvecs" => Ok(Format::FVECS),
            "bvecs" => Ok(Format::BVECS),
            other => Err(Error::UnsupportedElem(format!("`{other}` (expected fbin, u8bin, fvecs or bvecs)"))),
        }
    }
}

/// Validated metadata of an on-disk vector file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHandle {
    pub path: PathBuf,
    pub count: u64,
    pub dim: usize,
    pub format: Format,
}

impl DatasetHandle {
    pub fn header_bytes(&self) -> u64 {
        match self.format.layout {
            Layout::Fbin => 8,
            Layout::Fvecs => 0,
        }
    }

    /// Bytes one row occupies on disk, including any per-record prefix.
    pub fn stored_row_bytes(&self) -> u64 {
        let payload = self.dim as u64 * self.format.elem.width();
        match self.format.layout {
            Layout::Fbin => payload,
            Layout::Fvecs => 4 + payload,
        }
    }

    pub fn file_bytes(&self) -> u64 {
        self.header_bytes() + self.count * self.stored_row_bytes()
    }

    /// Size of the dataset as float32 vectors; the base for `%` budgets.
    pub fn vector_bytes(&self) -> u64 {
        self.count * self.dim as u64 * 4
    }

    fn row_offset(&self, id: u64) -> u64 {
        self.header_bytes() + id * self.stored_row_bytes()
    }

    fn decode_rows(&self, raw: &[u8], out: &mut Vec<f32>) {
        let row = self.stored_row_bytes() as usize;
        let skip = if self.format.layout == Layout::Fvecs { 4 } else { 0 };
        for rec in raw.chunks_exact(row) {
            let payload = &rec[skip..];
            match self.format.elem {
                Elem::F32 => out.extend(
                    payload
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
                ),
                Elem::U8 => out.extend(payload.iter().map(|&b| b as f32)),
            }
        }
    }

    /// Positioned reads of the given rows, in the order given.
    pub fn read_rows(&self, ids: &[u64]) -> Result<Vec<f32>> {
        let file = File::open(&self.path).at(&self.path)?;
        let mut raw = vec![0u8; self.stored_row_bytes() as usize];
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &id in ids {
            if id >= self.count {
                return Err(Error::InvalidArgument(format!("row {id} out of range (N = {})", self.count)));
            }
            file.read_exact_at(&mut raw, self.row_offset(id)).at(&self.path)?;
            self.decode_rows(&raw, &mut out);
        }
        Ok(out)
    }

    /// Whole dataset as float32, for desk-scale oracles and tests.
    pub fn read_all(&self) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(self.count as usize * self.dim);
        for block in stream_blocks(self, DEFAULT_BLOCK_BYTES)? {
            out.extend_from_slice(&block?.vectors);
        }
        Ok(out)
    }

    /// Cheap content fingerprint: size, shape and the first and last MiB.
    pub fn content_key(&self) -> Result<u64> {
        let file = File::open(&self.path).at(&self.path)?;
        let len = self.file_bytes();
        let mut h = Fnv::new();
        h.write_u64(len);
        h.write_u64(self.count);
        h.write_u64(self.dim as u64);
        h.write(self.format.name().as_bytes());
        let span = len.min(1 << 20);
        let mut buf = vec![0u8; span as usize];
        file.read_exact_at(&mut buf, 0).at(&self.path)?;
        h.write(&buf);
        file.read_exact_at(&mut buf, len - span).at(&self.path)?;
        h.write(&buf);
        Ok(h.finish())
    }
}

/// Opens and validates a vector file. Fails instead of guessing when the
/// header and the file length disagree.
pub fn open_dataset(path: impl AsRef<Path>, format: Format) -> Result<DatasetHandle> {
    let path = path.as_ref();
    let mut file = File::open(path).at(path)?;
    let actual = file.metadata().at(path)?.len();
    let bad = |reason: &str| Error::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    match format.layout {
        Layout::Fbin => {
            if actual < 8 {
                return Err(Error::SizeMismatch { path: path.into(), expected: 8, actual });
            }
            let mut hdr = [0u8; 8];
            file.read_exact(&mut hdr).at(path)?;
            let count = u32::from_le_bytes(hdr[0..4].try_into().unwrap()) as u64;
            let dim = u32::from_le_bytes(hdr[4..8].try_into().unwrap()) as u64;
            if count == 0 || dim == 0 {
                return Err(bad("count and dim must be at least 1"));
            }
            let expected = 8 + count * dim * format.elem.width();
            if expected != actual {
                return Err(Error::SizeMismatch { path: path.into(), expected, actual });
            }
            Ok(DatasetHandle { path: path.into(), count, dim: dim as usize, format })
        }
        Layout::Fvecs => {
            let mut first = [0u8; 4];
            if actual < 4 {
                return Err(Error::SizeMismatch { path: path.into(), expected: 4, actual });
            }
            file.read_exact(&mut first).at(path)?;
            let dim = i32::from_le_bytes(first);
            if dim <= 0 {
                return Err(bad("record dimension must be positive"));
            }
            let dim = dim as u64;
            let row = 4 + dim * format.elem.width();
            if actual % row != 0 {
                let expected = (actual / row + 1) * row;
                return Err(Error::SizeMismatch { path: path.into(), expected, actual });
            }
            let count = actual / row;
            check_fvecs_dims(&mut file, path, count, dim, row)?;
            Ok(DatasetHandle { path: path.into(), count, dim: dim as usize, format })
        }
    }
}

fn check_fvecs_dims(file: &mut File, path: &Path, count: u64, dim: u64, row: u64) -> Result<()> {
    file.seek(SeekFrom::Start(0)).at(path)?;
    let rows_per_chunk = ((8u64 << 20) / row).max(1);
    let mut buf = Vec::new();
    let mut record = 0u64;
    while record < count {
        let rows = rows_per_chunk.min(count - record);
        buf.resize((rows * row) as usize, 0);
        file.read_exact(&mut buf).at(path)?;
        for rec in buf.chunks_exact(row as usize) {
            let found = i32::from_le_bytes(rec[0..4].try_into().unwrap());
            if found as i64 != dim as i64 {
                return Err(Error::InconsistentDim {
                    path: path.into(),
                    record,
                    expected: dim,
                    found: found as u64,
                });
            }
            record += 1;
        }
    }
    Ok(())
}

/// Opens a file, taking the format from its extension.
pub fn open_auto(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let path = path.as_ref();
    open_dataset(path, Format::from_path(path)?)
}

/// Consecutive rows `[start_id, start_id + len)` decoded to float32.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorBlock {
    pub start_id: u64,
    pub dim: usize,
    pub vectors: Vec<f32>,
}

impl VectorBlock {
    pub fn len(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }
}

/// Rows per block such that both the raw read and the decoded block fit.
pub fn rows_per_block(handle: &DatasetHandle, block_bytes: u64) -> Result<u64> {
    let stored = handle.stored_row_bytes();
    let decoded = handle.dim as u64 * 4;
    if block_bytes < ssjoin_core::PAGE_SIZE || block_bytes < stored.max(decoded) {
        return Err(Error::BlockTooSmall {
            block_bytes,
            record_bytes: stored.max(decoded),
        });
    }
    Ok(block_bytes / stored.max(decoded))
}

/// Single-consumer sequential reader over a dataset.
pub struct BlockStream<'a> {
    handle: &'a DatasetHandle,
    file: File,
    next_id: u64,
    rows: u64,
    raw: Vec<u8>,
}

impl Iterator for BlockStream<'_> {
    type Item = Result<VectorBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_id >= self.handle.count {
            return None;
        }
        let rows = self.rows.min(self.handle.count - self.next_id);
        let start_id = self.next_id;
        self.next_id += rows;
        self.raw.resize((rows * self.handle.stored_row_bytes()) as usize, 0);
        if let Err(e) = self.file.read_exact(&mut self.raw).at(&self.handle.path) {
            self.next_id = self.handle.count;
            return Some(Err(e));
        }
        let mut vectors = Vec::with_capacity(rows as usize * self.handle.dim);
        self.handle.decode_rows(&self.raw, &mut vectors);
        Some(Ok(VectorBlock { start_id, dim: self.handle.dim, vectors }))
    }
}

/// Streams the dataset in id order with sequential reads of at most
/// `block_bytes` per block.
pub fn stream_blocks(handle: &DatasetHandle, block_bytes: u64) -> Result<BlockStream<'_>> {
    let rows = rows_per_block(handle, block_bytes)?;
    let mut file = File::open(&handle.path).at(&handle.path)?;
    file.seek(SeekFrom::Start(handle.header_bytes())).at(&handle.path)?;
    Ok(BlockStream {
        handle,
        file,
        next_id: 0,
        rows,
        raw: Vec::new(),
    })
}

/// Streaming writer for any supported format.
pub struct DatasetWriter {
    path: PathBuf,
    out: BufWriter<File>,
    format: Format,
    dim: usize,
    expected: u64,
    written: u64,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, format: Format, dim: usize, count: u64) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if dim == 0 || count == 0 || count > u32::MAX as u64 || dim > u32::MAX as usize {
            return Err(Error::InvalidArgument("count and dim must be in [1, 2^32)".into()));
        }
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)
            .at(&path)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        if format.layout == Layout::Fbin {
            out.write_all(&(count as u32).to_le_bytes()).at(&path)?;
            out.write_all(&(dim as u32).to_le_bytes()).at(&path)?;
        }
        Ok(DatasetWriter { path, out, format, dim, expected: count, written: 0 })
    }

    /// Appends whole rows. uint8 formats round and clamp to [0, 255].
    pub fn push(&mut self, rows: &[f32]) -> Result<()> {
        assert_eq!(rows.len() % self.dim, 0, "partial row");
        for row in rows.chunks_exact(self.dim) {
            if self.format.layout == Layout::Fvecs {
                self.out.write_all(&(self.dim as i32).to_le_bytes()).at(&self.path)?;
            }
            for &v in row {
                match self.format.elem {
                    Elem::F32 => self.out.write_all(&v.to_le_bytes()),
                    Elem::U8 => self.out.write_all(&[v.round().clamp(0.0, 255.0) as u8]),
                }
                .at(&self.path)?;
            }
            self.written += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<DatasetHandle> {
        if self.written != self.expected {
            return Err(Error::InvalidArgument(format!(
                "wrote {} rows, header promised {}",
                self.written, self.expected
            )));
        }
        self.out.flush().at(&self.path)?;
        self.out.get_ref().sync_all().at(&self.path)?;
        open_dataset(&self.path, self.format)
    }
}

/// Writes `vectors` (row-major, `dim` wide) in one go.
pub fn write_dataset(path: impl AsRef<Path>, format: Format, dim: usize, vectors: &[f32]) -> Result<DatasetHandle> {
    let mut w = DatasetWriter::create(path, format, dim, (vectors.len() / dim) as u64)?;
    w.push(vectors)?;
    w.finish()
}

pub fn write_fbin(path: impl AsRef<Path>, dim: usize, vectors: &[f32]) -> Result<DatasetHandle> {
    write_dataset(path, Format::FBIN, dim, vectors)
}

/// Gaussian mixture: cluster centers uniform in `[0,1]^dim`, isotropic noise
/// with standard deviation `spread`, cluster chosen uniformly per row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub n: u64,
    pub dim: usize,
    pub clusters: usize,
    pub spread: f32,
    pub seed: u64,
}

/// Row generator behind [`gen_synthetic`]; yields `(cluster, vector)`.
pub struct Synthetic {
    params: SynthParams,
    centers: Vec<f32>,
    rng: rand_chacha::ChaCha8Rng,
    emitted: u64,
}

impl Synthetic {
    pub fn new(params: SynthParams) -> Result<Self> {
        if params.clusters == 0 || params.dim == 0 || params.n == 0 {
            return Err(Error::InvalidArgument("n, dim and clusters must be at least 1".into()));
        }
        if !(params.spread >= 0.0 && params.spread.is_finite()) {
            return Err(Error::InvalidArgument("spread must be finite and non-negative".into()));
        }
        let mut rng = sample::rng(params.seed);
        let centers = (0..params.clusters * params.dim).map(|_| rng.random::<f32>()).collect();
        Ok(Synthetic { params, centers, rng, emitted: 0 })
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    /// Fills `out` with the next row and returns its cluster.
    pub fn next_row(&mut self, out: &mut Vec<f32>) -> Option<usize> {
        if self.emitted >= self.params.n {
            return None;
        }
        self.emitted += 1;
        let d = self.params.dim;
        let c = self.rng.random_range(0..self.params.clusters);
        for k in 0..d {
            let z: f32 = self.rng.sample(StandardNormal);
            out.push(self.centers[c * d + k] + self.params.spread * z);
        }
        Some(c)
    }
}

/// Writes a deterministic Gaussian-mixture dataset in fbin.
pub fn gen_synthetic(params: SynthParams, path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let mut gen = Synthetic::new(params)?;
    let mut w = DatasetWriter::create(path, Format::FBIN, params.dim, params.n)?;
    let mut chunk = Vec::with_capacity(4096 * params.dim);
    loop {
        chunk.clear();
        while chunk.len() < 4096 * params.dim && gen.next_row(&mut chunk).is_some() {}
        if chunk.is_empty() {
            break;
        }
        w.push(&chunk)?;
    }
    w.finish()
}
