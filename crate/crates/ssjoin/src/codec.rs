//! Little-endian binary encoding for artifact files, written atomically.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};

pub struct Encoder<W: Write> {
    out: W,
    path: PathBuf,
}

impl<W: Write> Encoder<W> {
    pub fn new(out: W, path: &Path) -> Self {
        Encoder { out, path: path.to_path_buf() }
    }

    pub fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.out.write_all(b).at(&self.path)
    }

    pub fn u8(&mut self, v: u8) -> Result<()> {
        self.bytes(&[v])
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f32(&mut self, v: f32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f32s(&mut self, v: &[f32]) -> Result<()> {
        for &x in v {
            self.f32(x)?;
        }
        Ok(())
    }

    pub fn u32s(&mut self, v: &[u32]) -> Result<()> {
        for &x in v {
            self.u32(x)?;
        }
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub struct Decoder<R: Read> {
    input: R,
    path: PathBuf,
}

impl<R: Read> Decoder<R> {
    pub fn new(input: R, path: &Path) -> Self {
        Decoder { input, path: path.to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.input.read_exact(&mut b).at(&self.path)?;
        Ok(b)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        (0..n).map(|_| self.f32()).collect()
    }

    pub fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        (0..n).map(|_| self.u32()).collect()
    }

    pub fn bad(&self, reason: impl Into<String>) -> Error {
        Error::BadHeader { path: self.path.clone(), reason: reason.into() }
    }

    /// Checks the magic and returns the version.
    pub fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<u32> {
        let found: [u8; 8] = self.bytes()?;
        if &found != magic {
            return Err(self.bad("wrong magic number"));
        }
        let v = self.u32()?;
        if v != version {
            return Err(self.bad(format!("unsupported version {v}, expected {version}")));
        }
        Ok(v)
    }

    /// Fails unless the input is exhausted.
    pub fn finish(mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.input.read(&mut extra).at(&self.path)? {
            0 => Ok(()),
            _ => Err(self.bad("trailing bytes")),
        }
    }
}

pub fn open_decoder(path: &Path) -> Result<Decoder<BufReader<File>>> {
    let file = File::open(path).at(path)?;
    Ok(Decoder::new(BufReader::with_capacity(1 << 20, file), path))
}

/// Sibling temp path used while an artifact is being written.
pub fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through a temp file and renames into place on success, so readers
/// never see a half-written artifact.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut Encoder<BufWriter<File>>) -> Result<()>,
{
    let tmp = temp_path(path);
    let result = (|| {
        let file = File::create(&tmp).at(&tmp)?;
        let mut enc = Encoder::new(BufWriter::with_capacity(1 << 20, file), path);
        body(&mut enc)?;
        let file = enc.into_inner().into_inner().map_err(|e| e.into_error()).at(&tmp)?;
        file.sync_all().at(&tmp)?;
        fs::rename(&tmp, path).at(path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
