//! CDFM v1: the on-disk feature-map format.
//!
//! ```text
//! offset size field
//!      0    4 magic "CDFM"
//!      4    2 version (u16, = 1)
//!      6    2 patch_size (u16)
//!      8    4 rows L (u32)
//!     12    4 cols V (u32)
//!     16    4 channels D (u32)
//!     20    4 image height H (u32)
//!     24    4 image width W (u32)
//!     28    4 effective height (u32)
//!     32    4 effective width (u32)
//!     36    2 resolution level k (u16)
//!     38    2 reserved (u16, = 0)
//!     40  4*n payload, n = L*V*D f32, index ((row*V)+col)*D + channel
//! ```
//!
//! Every integer and float is little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorio::FeatureMap;

pub const MAGIC: [u8; 4] = *b"CDFM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 40;

/// Decoded CDFM header, without the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct CdfmHeader {
    pub version: u16,
    pub patch_size: u16,
    pub rows: u32,
    pub cols: u32,
    pub channels: u32,
    pub image_height: u32,
    pub image_width: u32,
    pub effective_height: u32,
    pub effective_width: u32,
    pub resolution_level: u16,
}

impl CdfmHeader {
    fn for_map(map: &FeatureMap) -> Result<Self> {
        fn narrow<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
            T::try_from(v).map_err(|_| Error::Validation(format!("{what} = {v} does not fit the header")))
        }
        let (h, w) = map.image_size();
        let (eh, ew) = map.effective_size();
        Ok(CdfmHeader {
            version: VERSION,
            patch_size: narrow(map.patch_size(), "patch_size")?,
            rows: narrow(map.rows(), "rows")?,
            cols: narrow(map.cols(), "cols")?,
            channels: narrow(map.channels(), "channels")?,
            image_height: narrow(h, "image_height")?,
            image_width: narrow(w, "image_width")?,
            effective_height: narrow(eh, "effective_height")?,
            effective_width: narrow(ew, "effective_width")?,
            resolution_level: narrow(map.resolution_level() as usize, "resolution_level")?,
        })
    }

    fn encode(&self) -> [u8; HEADER_LEN] {
        let mut buf = [0u8; HEADER_LEN];
        buf[0..4].copy_from_slice(&MAGIC);
        buf[4..6].copy_from_slice(&self.version.to_le_bytes());
        buf[6..8].copy_from_slice(&self.patch_size.to_le_bytes());
        let words = [
            self.rows,
            self.cols,
            self.channels,
            self.image_height,
            self.image_width,
            self.effective_height,
            self.effective_width,
        ];
        for (i, w) in words.iter().enumerate() {
            let at = 8 + 4 * i;
            buf[at..at + 4].copy_from_slice(&w.to_le_bytes());
        }
        buf[36..38].copy_from_slice(&self.resolution_level.to_le_bytes());
        // reserved stays zero
        buf
    }

    fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < 4 || buf[0..4] != MAGIC {
            let got = &buf[..buf.len().min(4)];
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"CDFM\"",
                String::from_utf8_lossy(got)
            )));
        }
        if buf.len() < HEADER_LEN {
            return Err(Error::Corruption(format!(
                "header truncated at {} of {HEADER_LEN} bytes",
                buf.len()
            )));
        }
        let u16_at = |at: usize| u16::from_le_bytes([buf[at], buf[at + 1]]);
        let u32_at = |at: usize| u32::from_le_bytes([buf[at], buf[at + 1], buf[at + 2], buf[at + 3]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported CDFM version {version}")));
        }
        let reserved = u16_at(38);
        if reserved != 0 {
            return Err(Error::Format(format!("reserved field is {reserved}, expected 0")));
        }
        Ok(CdfmHeader {
            version,
            patch_size: u16_at(6),
            rows: u32_at(8),
            cols: u32_at(12),
            channels: u32_at(16),
            image_height: u32_at(20),
            image_width: u32_at(24),
            effective_height: u32_at(28),
            effective_width: u32_at(32),
            resolution_level: u16_at(36),
        })
    }

    /// Number of f32 values in the payload, if it fits in memory.
    pub fn payload_len(&self) -> Option<usize> {
        (self.rows as usize)
            .checked_mul(self.cols as usize)?
            .checked_mul(self.channels as usize)
    }
}

/// Serializes a map into CDFM bytes. Validates first, so nothing is
/// emitted for an invalid map.
pub fn write_feature_map<W: Write>(map: &FeatureMap, mut out: W) -> Result<()> {
    map.validate()?;
    let header = CdfmHeader::for_map(map)?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * map.data().len());
    bytes.extend_from_slice(&header.encode());
    for v in map.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&bytes)
        .map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

/// Parses CDFM bytes. The whole input must be consumed: a short payload and
/// trailing garbage are both corruption.
pub fn read_feature_map<R: Read>(mut input: R) -> Result<FeatureMap> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<reader>", e))?;
    decode_feature_map(&bytes)
}

pub fn decode_feature_map(bytes: &[u8]) -> Result<FeatureMap> {
    let header = CdfmHeader::decode(bytes)?;
    if header.rows == 0 || header.cols == 0 || header.channels == 0 {
        return Err(Error::Validation(format!(
            "zero-sized dims {}x{}x{}",
            header.rows, header.cols, header.channels
        )));
    }
    let n = header
        .payload_len()
        .ok_or_else(|| Error::Corruption("payload size overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    let expected = n
        .checked_mul(4)
        .ok_or_else(|| Error::Corruption("payload size overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::Corruption(format!(
            "payload has {} bytes, header needs {expected}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureMap::from_parts(
        data,
        header.rows as usize,
        header.cols as usize,
        header.channels as usize,
        header.patch_size as usize,
        (header.image_height as usize, header.image_width as usize),
        (header.effective_height as usize, header.effective_width as usize),
        header.resolution_level as u32,
    )
}

/// Reads only the header of a CDFM file.
pub fn read_header(path: impl AsRef<Path>) -> Result<CdfmHeader> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    (&mut file)
        .take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    CdfmHeader::decode(&buf)
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_feature_map(&bytes)
}

pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    map.validate()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_feature_map(map, &mut out).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    out.flush().map_err(|e| Error::io(path, e))
}
