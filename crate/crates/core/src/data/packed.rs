//! Packed 8-bit image records and the `.sid` container.
//!
//! Layout (little-endian): magic `SID1`, u32 count, u32 height, u32 width,
//! u32 channels, u8 dtype (0 = uint8), then `count` records stored row-major,
//! channel-last, in index order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const SID_MAGIC: &[u8; 4] = b"SID1";
pub const SID_DTYPE_U8: u8 = 0;
pub const SID_HEADER_LEN: usize = 4 + 4 * 4 + 1;

/// A dense stack of equally sized u8 images, NHWC.
#[derive(Clone, PartialEq, Eq)]
pub struct PackedImages {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl std::fmt::Debug for PackedImages {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "PackedImages({}x{}x{}x{})",
            self.count, self.height, self.width, self.channels
        )
    }
}

impl PackedImages {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            count: 0,
            height,
            width,
            channels,
            data: Vec::new(),
        }
    }

    pub fn with_capacity(height: usize, width: usize, channels: usize, count: usize) -> Self {
        let mut p = Self::new(height, width, channels);
        p.data.reserve(count * p.record_len());
        p
    }

    pub fn record_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn record(&self, i: usize) -> &[u8] {
        let n = self.record_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn push(&mut self, record: &[u8]) {
        assert_eq!(record.len(), self.record_len(), "record size mismatch");
        self.data.extend_from_slice(record);
        self.count += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn len(&self) -> usize {
        self.count
    }

    /// First `n` records as a new stack.
    pub fn prefix(&self, n: usize) -> PackedImages {
        let n = n.min(self.count);
        PackedImages {
            count: n,
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data[..n * self.record_len()].to_vec(),
        }
    }

    pub fn select(&self, indices: &[usize]) -> PackedImages {
        let mut out = PackedImages::with_capacity(self.height, self.width, self.channels, indices.len());
        for &i in indices {
            out.push(self.record(i));
        }
        out
    }
}

pub fn write_sid_header<W: Write>(w: &mut W, count: usize, height: usize, width: usize, channels: usize) -> Result<()> {
    let dims = [count, height, width, channels];
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::format("sid", "dimension exceeds u32"));
    }
    w.write_all(SID_MAGIC)?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&[SID_DTYPE_U8])?;
    Ok(())
}

pub fn write_sid(path: impl AsRef<Path>, images: &PackedImages) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_sid_header(&mut w, images.count, images.height, images.width, images.channels)?;
    w.write_all(&images.data)?;
    w.flush()?;
    Ok(())
}

pub fn read_sid(path: impl AsRef<Path>) -> Result<PackedImages> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = [0u8; SID_HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::format("sid", format!("truncated header: {e}")))?;
    if &header[..4] != SID_MAGIC {
        return Err(Error::format("sid", "bad magic"));
    }
    let field = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (count, height, width, channels) = (field(0), field(1), field(2), field(3));
    if header[20] != SID_DTYPE_U8 {
        return Err(Error::format("sid", format!("unsupported dtype code {}", header[20])));
    }
    let mut data = vec![0u8; count * height * width * channels];
    r.read_exact(&mut data)
        .map_err(|e| Error::format("sid", format!("truncated payload: {e}")))?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("sid", "trailing bytes after payload"));
    }
    Ok(PackedImages {
        count,
        height,
        width,
        channels,
        data,
    })
}
