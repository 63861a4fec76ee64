// SPDX-License-Identifier: Apache-2.0

//! Random-access byte sources.
//!
//! Every layer of the pipeline (container file, flattened virtual disk,
//! partition slice) is exposed through [`ByteSource`], so a filesystem can be
//! read straight out of a VDI container without materializing the raw disk.

use std::fs::File;
use std::io;
use std::sync::Arc;

/// A fixed-length, randomly addressable run of bytes.
///
/// Implementations must be safe to read from several threads at once.
pub trait ByteSource: Send + Sync {
    /// Total length in bytes.
    fn size(&self) -> u64;

    /// Fills `buf` with the bytes starting at `offset`.
    ///
    /// Reading past [`ByteSource::size`] fails with `UnexpectedEof`.
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()>;
}

pub(crate) fn out_of_bounds(offset: u64, len: usize, size: u64) -> io::Error {
    io::Error::new(
        io::ErrorKind::UnexpectedEof,
        format!("read of {len} bytes at offset {offset} exceeds source length {size}"),
    )
}

fn check_bounds(offset: u64, len: usize, size: u64) -> io::Result<()> {
    match offset.checked_add(len as u64) {
        Some(end) if end <= size => Ok(()),
        _ => Err(out_of_bounds(offset, len, size)),
    }
}

impl ByteSource for [u8] {
    fn size(&self) -> u64 {
        self.len() as u64
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        check_bounds(offset, buf.len(), self.size())?;
        let start = offset as usize;
        buf.copy_from_slice(&self[start..start + buf.len()]);
        Ok(())
    }
}

impl ByteSource for Vec<u8> {
    fn size(&self) -> u64 {
        self.as_slice().size()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.as_slice().read_at(offset, buf)
    }
}

/// A file opened for positional reads. The length is captured at open time.
#[derive(Debug)]
pub struct FileSource {
    file: File,
    len: u64,
}

impl FileSource {
    pub fn open(path: impl AsRef<std::path::Path>) -> io::Result<Self> {
        Self::new(File::open(path)?)
    }

    pub fn new(file: File) -> io::Result<Self> {
        let len = file.metadata()?.len();
        Ok(Self { file, len })
    }
}

impl ByteSource for FileSource {
    fn size(&self) -> u64 {
        self.len
    }

    #[cfg(unix)]
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        use std::os::unix::fs::FileExt;
        check_bounds(offset, buf.len(), self.len)?;
        self.file.read_exact_at(buf, offset)
    }

    #[cfg(windows)]
    fn read_at(&self, offset: u64, mut buf: &mut [u8]) -> io::Result<()> {
        use std::os::windows::fs::FileExt;
        check_bounds(offset, buf.len(), self.len)?;
        let mut pos = offset;
        while !buf.is_empty() {
            let n = self.file.seek_read(buf, pos)?;
            if n == 0 {
                return Err(out_of_bounds(pos, buf.len(), self.len));
            }
            pos += n as u64;
            buf = &mut buf[n..];
        }
        Ok(())
    }
}

impl<T: ByteSource + ?Sized> ByteSource for &T {
    fn size(&self) -> u64 {
        (**self).size()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        (**self).read_at(offset, buf)
    }
}

impl<T: ByteSource + ?Sized> ByteSource for Arc<T> {
    fn size(&self) -> u64 {
        (**self).size()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        (**self).read_at(offset, buf)
    }
}

impl<T: ByteSource + ?Sized> ByteSource for Box<T> {
    fn size(&self) -> u64 {
        (**self).size()
    }

    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        (**self).read_at(offset, buf)
    }
}

/// Reads `len` bytes at `offset` into a fresh vector.
pub fn read_vec<S: ByteSource + ?Sized>(src: &S, offset: u64, len: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; len];
    src.read_at(offset, &mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slice_reads_are_bounds_checked() {
        let data = vec![1u8, 2, 3, 4];
        let mut buf = [0u8; 2];
        data.read_at(2, &mut buf).unwrap();
        assert_eq!(buf, [3, 4]);
        assert!(data.read_at(3, &mut buf).is_err());
        assert!(data.read_at(u64::MAX, &mut buf).is_err());
        data.read_at(4, &mut []).unwrap();
    }

    #[test]
    fn file_source_reads_positionally() {
        let path = std::env::temp_dir().join(format!("vmslim-src-{}", std::process::id()));
        std::fs::write(&path, b"hello world").unwrap();
        let src = FileSource::open(&path).unwrap();
        assert_eq!(src.size(), 11);
        assert_eq!(read_vec(&src, 6, 5).unwrap(), b"world");
        assert!(read_vec(&src, 8, 5).is_err());
        std::fs::remove_file(path).unwrap();
    }
}
