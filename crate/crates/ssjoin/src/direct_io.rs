//! Page-aligned reads that bypass the page cache where the filesystem allows.

use std::fs::{File, OpenOptions};
use std::io;
use std::os::unix::fs::{FileExt, OpenOptionsExt};
use std::path::{Path, PathBuf};

use ssjoin_core::PAGE_SIZE;

use crate::error::{Error, IoContext, Result};

const ALIGN: usize = PAGE_SIZE as usize;

/// A byte buffer whose start is page aligned.
#[derive(Debug, Default)]
pub struct AlignedBuf {
    raw: Vec<u8>,
    start: usize,
    len: usize,
}

impl AlignedBuf {
    pub fn with_len(len: usize) -> Self {
        let mut buf = AlignedBuf::default();
        buf.set_len(len);
        buf
    }

    /// Resizes, reallocating only when the current allocation is too small.
    pub fn set_len(&mut self, len: usize) {
        if self.raw.len() < self.start + len {
            self.raw = vec![0u8; len + ALIGN];
            self.start = self.raw.as_ptr().align_offset(ALIGN);
        }
        self.len = len;
    }

    pub fn capacity(&self) -> usize {
        self.raw.len().saturating_sub(self.start)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.raw[self.start..self.start + self.len]
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.raw[self.start..self.start + self.len]
    }
}

/// Positioned extent reader. Opens with `O_DIRECT` and falls back to
/// buffered reads when the filesystem refuses it.
#[derive(Debug)]
pub struct DirectReader {
    path: PathBuf,
    file: File,
    direct: bool,
    bytes_read: u64,
}

impl DirectReader {
    pub fn open(path: impl AsRef<Path>, prefer_direct: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if prefer_direct {
            match OpenOptions::new().read(true).custom_flags(libc::O_DIRECT).open(&path) {
                Ok(file) => return Ok(DirectReader { path, file, direct: true, bytes_read: 0 }),
                Err(e) if e.raw_os_error() == Some(libc::EINVAL) => {
                    log::warn!("{}: direct i/o unsupported, using buffered reads", path.display());
                }
                Err(e) => return Err(e).at(&path),
            }
        }
        let file = File::open(&path).at(&path)?;
        Ok(DirectReader { path, file, direct: false, bytes_read: 0 })
    }

    pub fn is_direct(&self) -> bool {
        self.direct
    }

    pub fn bytes_read(&self) -> u64 {
        self.bytes_read
    }

    /// Reads exactly `len` bytes at `offset`; both must be page multiples.
    pub fn read_extent<'b>(&mut self, offset: u64, len: u64, buf: &'b mut AlignedBuf) -> Result<&'b [u8]> {
        if offset % PAGE_SIZE != 0 || len % PAGE_SIZE != 0 {
            return Err(Error::InvalidArgument(format!(
                "unaligned extent read at {offset} of {len} bytes"
            )));
        }
        buf.set_len(len as usize);
        match self.file.read_exact_at(buf.as_mut_slice(), offset) {
            Ok(()) => {}
            Err(e) if self.direct && e.raw_os_error() == Some(libc::EINVAL) => {
                log::warn!("{}: direct read rejected, reopening buffered", self.path.display());
                self.file = File::open(&self.path).at(&self.path)?;
                self.direct = false;
                self.file.read_exact_at(buf.as_mut_slice(), offset).at(&self.path)?;
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(Error::Io { path: self.path.clone(), source: e });
            }
            Err(e) => return Err(e).at(&self.path),
        }
        self.bytes_read += len;
        Ok(buf.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligned_and_reusable() {
        let mut b = AlignedBuf::with_len(8192);
        assert_eq!(b.as_slice().as_ptr() as usize % ALIGN, 0);
        let cap = b.capacity();
        b.set_len(4096);
        assert_eq!(b.capacity(), cap);
        assert_eq!(b.as_slice().len(), 4096);
    }

    #[test]
    fn reads_extents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let data: Vec<u8> = (0..3 * 4096).map(|i| (i % 251) as u8).collect();
        std::fs::write(&path, &data).unwrap();
        let mut r = DirectReader::open(&path, true).unwrap();
        let mut buf = AlignedBuf::default();
        assert_eq!(r.read_extent(4096, 8192, &mut buf).unwrap(), &data[4096..]);
        assert!(r.read_extent(100, 4096, &mut buf).is_err());
        assert!(r.read_extent(8192, 8192, &mut buf).is_err());
        assert_eq!(r.bytes_read(), 8192);
    }
}
