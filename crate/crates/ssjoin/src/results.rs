//! `.pairs` result files: a 32-byte header then `[u64 a][u64 b][f32 dist]`
//! records.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ssjoin_core::verify::ResultPair;

use crate::codec::temp_path;
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"SSJPAIRS";
const VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 32;
pub const RECORD_BYTES: u64 = 20;
const BUFFER_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairsHeader {
    pub epsilon: f64,
    pub count: u64,
}

/// Destination for verified pairs.
pub trait PairSink {
    fn emit(&mut self, pairs: &[ResultPair]) -> Result<()>;
}

/// Counts pairs without storing them.
#[derive(Debug, Default)]
pub struct CountingSink {
    pub pairs: u64,
}

impl PairSink for CountingSink {
    fn emit(&mut self, pairs: &[ResultPair]) -> Result<()> {
        self.pairs += pairs.len() as u64;
        Ok(())
    }
}

impl PairSink for Vec<ResultPair> {
    fn emit(&mut self, pairs: &[ResultPair]) -> Result<()> {
        self.extend_from_slice(pairs);
        Ok(())
    }
}

/// Buffered writer; appears at its final path only after [`ResultWriter::finish`].
pub struct ResultWriter {
    path: PathBuf,
    tmp: PathBuf,
    out: Option<BufWriter<File>>,
    pairs: u64,
}

impl ResultWriter {
    pub fn create(path: impl AsRef<Path>, header: PairsHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let tmp = temp_path(&path);
        let mut out = BufWriter::with_capacity(BUFFER_BYTES, File::create(&tmp).at(&tmp)?);
        let mut hdr = Vec::with_capacity(HEADER_BYTES as usize);
        hdr.extend_from_slice(MAGIC);
        hdr.extend_from_slice(&VERSION.to_le_bytes());
        hdr.extend_from_slice(&0u32.to_le_bytes());
        hdr.extend_from_slice(&header.epsilon.to_le_bytes());
        hdr.extend_from_slice(&header.count.to_le_bytes());
        out.write_all(&hdr).at(&tmp)?;
        Ok(ResultWriter { path, tmp, out: Some(out), pairs: 0 })
    }

    /// Appends pairs and returns the payload bytes written.
    pub fn write_results(&mut self, pairs: &[ResultPair]) -> Result<u64> {
        let out = self.out.as_mut().expect("writer already finished");
        for p in pairs {
            let mut rec = [0u8; RECORD_BYTES as usize];
            rec[0..8].copy_from_slice(&p.id_a.to_le_bytes());
            rec[8..16].copy_from_slice(&p.id_b.to_le_bytes());
            rec[16..20].copy_from_slice(&p.dist.to_le_bytes());
            out.write_all(&rec).at(&self.tmp)?;
        }
        self.pairs += pairs.len() as u64;
        Ok(pairs.len() as u64 * RECORD_BYTES)
    }

    pub fn pairs(&self) -> u64 {
        self.pairs
    }

    /// Flushes, syncs and moves the file into place. Returns total file bytes.
    pub fn finish(mut self) -> Result<u64> {
        let out = self.out.take().expect("writer already finished");
        let file = out.into_inner().map_err(|e| e.into_error()).at(&self.tmp)?;
        file.sync_all().at(&self.tmp)?;
        fs::rename(&self.tmp, &self.path).at(&self.path)?;
        Ok(HEADER_BYTES + self.pairs * RECORD_BYTES)
    }
}

impl PairSink for ResultWriter {
    fn emit(&mut self, pairs: &[ResultPair]) -> Result<()> {
        self.write_results(pairs).map(|_| ())
    }
}

impl Drop for ResultWriter {
    fn drop(&mut self) {
        if self.out.is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

pub fn read_pairs(path: &Path) -> Result<(PairsHeader, Vec<ResultPair>)> {
    let file = File::open(path).at(path)?;
    let len = file.metadata().at(path)?.len();
    let bad = |reason: &str| Error::BadHeader { path: path.into(), reason: reason.into() };
    if len < HEADER_BYTES || (len - HEADER_BYTES) % RECORD_BYTES != 0 {
        return Err(bad("length is not a header plus whole records"));
    }
    let mut r = BufReader::with_capacity(BUFFER_BYTES, file);
    let mut hdr = [0u8; HEADER_BYTES as usize];
    r.read_exact(&mut hdr).at(path)?;
    if &hdr[0..8] != MAGIC {
        return Err(bad("wrong magic number"));
    }
    if u32::from_le_bytes(hdr[8..12].try_into().unwrap()) != VERSION {
        return Err(bad("unsupported version"));
    }
    let header = PairsHeader {
        epsilon: f64::from_le_bytes(hdr[16..24].try_into().unwrap()),
        count: u64::from_le_bytes(hdr[24..32].try_into().unwrap()),
    };
    let n = ((len - HEADER_BYTES) / RECORD_BYTES) as usize;
    let mut pairs = Vec::with_capacity(n);
    let mut rec = [0u8; RECORD_BYTES as usize];
    for _ in 0..n {
        r.read_exact(&mut rec).at(path)?;
        pairs.push(ResultPair {
            id_a: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            id_b: u64::from_le_bytes(rec[8..16].try_into().unwrap()),
            dist: f32::from_le_bytes(rec[16..20].try_into().unwrap()),
        });
    }
    Ok((header, pairs))
}
