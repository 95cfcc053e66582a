//! Segment file format.
//!
//! ```text
//! offset size  field
//!      0    4  magic "PVSG"
//!      4    2  version (u16 LE) = 1
//!      6    2  reserved, zero
//!      8    8  FNV-1a 64 hash of the sensor key (u64 LE)
//!     16    8  window start, µs (i64 LE)
//!     24    8  chunk span, µs (i64 LE)
//!     32   16n records: ts µs (i64 LE), value (f64 LE)
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use super::{ChunkKey, StoreError};

pub const MAGIC: [u8; 4] = *b"PVSG";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;
pub const RECORD_LEN: usize = 16;
pub const SEGMENT_EXT: &str = "seg";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentHeader {
    pub key_hash: u64,
    pub window_start: i64,
    pub span: i64,
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SegmentHeader {
    pub fn for_key(key: &ChunkKey, span: i64) -> Self {
        SegmentHeader { key_hash: fnv1a64(key.sensor.as_bytes()), window_start: key.window_start, span }
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&VERSION.to_le_bytes());
        out[8..16].copy_from_slice(&self.key_hash.to_le_bytes());
        out[16..24].copy_from_slice(&self.window_start.to_le_bytes());
        out[24..32].copy_from_slice(&self.span.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("header truncated at {} bytes", bytes.len()));
        }
        if bytes[0..4] != MAGIC {
            return Err("bad magic".into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let word = |at: usize| <[u8; 8]>::try_from(&bytes[at..at + 8]).unwrap();
        Ok(SegmentHeader {
            key_hash: u64::from_le_bytes(word(8)),
            window_start: i64::from_le_bytes(word(16)),
            span: i64::from_le_bytes(word(24)),
        })
    }
}

pub fn encode_record(ts: i64, v: f64, out: &mut Vec<u8>) {
    out.extend_from_slice(&ts.to_le_bytes());
    out.extend_from_slice(&v.to_le_bytes());
}

/// Decodes whole records; a trailing partial record is ignored.
pub fn decode_records(bytes: &[u8]) -> Vec<(i64, f64)> {
    bytes
        .chunks_exact(RECORD_LEN)
        .map(|r| {
            let ts = i64::from_le_bytes(r[0..8].try_into().unwrap());
            let v = f64::from_le_bytes(r[8..16].try_into().unwrap());
            (ts, v)
        })
        .collect()
}

/// Directory name for a sensor key: bytes outside `[A-Za-z0-9_-]` are
/// percent-encoded, so the mapping is reversible.
pub fn sanitize_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    for b in key.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn unsanitize_key(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

pub fn segment_path(root: &Path, key: &ChunkKey) -> PathBuf {
    root.join(sanitize_key(&key.sensor))
        .join(format!("{}.{SEGMENT_EXT}", key.window_start))
}

/// Full contents of a segment: header plus every complete record.
pub struct SegmentData {
    pub header: SegmentHeader,
    pub records: Vec<(i64, f64)>,
    pub torn_bytes: usize,
}

pub fn read_segment(path: &Path) -> Result<SegmentData, StoreError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let header = SegmentHeader::decode(&bytes)
        .map_err(|why| StoreError::CorruptSegment { path: path.to_path_buf(), why })?;
    let body = &bytes[HEADER_LEN..];
    Ok(SegmentData {
        header,
        records: decode_records(body),
        torn_bytes: body.len() % RECORD_LEN,
    })
}

/// Appends encoded records, creating the file with its header first if needed.
pub fn append_records(path: &Path, header: &SegmentHeader, records: &[u8]) -> io::Result<u64> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut written = 0;
    if file.metadata()?.len() == 0 {
        file.write_all(&header.encode())?;
        written += HEADER_LEN as u64;
    }
    file.write_all(records)?;
    Ok(written + records.len() as u64)
}
