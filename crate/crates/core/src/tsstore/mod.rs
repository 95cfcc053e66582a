//! Time-series store partitioned by sensor and by time window.
//!
//! Each (sensor, window) pair is a chunk backed by one append-only segment
//! file. Out-of-order arrival is allowed; reads sort lazily per chunk and
//! cache the result until the next write. Duplicate (sensor, ts) pairs are
//! resolved last-write-wins.

mod check;
pub mod segment;
mod store;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use check::{check_segments, CheckReport};
pub use store::{InsertOutcome, InsertReport, Store, StoreOptions};

pub const DEFAULT_CHUNK_SPAN_US: i64 = 3_600_000_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage full: {used} of {max} bytes used")]
    StorageFull { used: u64, max: u64 },
    #[error("corrupt segment {}: {why}", path.display())]
    CorruptSegment { path: PathBuf, why: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sensor: String,
    /// Microseconds since the Unix epoch, UTC.
    pub ts: i64,
    pub v: f64,
}

impl Sample {
    pub fn new(sensor: impl Into<String>, ts: i64, v: f64) -> Self {
        Sample { sensor: sensor.into(), ts, v }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkKey {
    pub sensor: String,
    pub window_start: i64,
}

/// Metadata of one chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkMeta {
    pub key: ChunkKey,
    /// Records in the segment, duplicates included.
    pub records: u64,
    pub min_ts: i64,
    pub max_ts: i64,
    pub path: PathBuf,
}

/// Chunk containing `ts`: the window starting at `span * floor(ts / span)`.
pub fn chunk_for(sensor: &str, ts: i64, span: i64) -> ChunkKey {
    assert!(span > 0, "chunk span must be positive");
    ChunkKey { sensor: sensor.to_string(), window_start: ts.div_euclid(span) * span }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Avg,
    Min,
    Max,
    Count,
}

impl FromStr for Aggregation {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "avg" | "mean" => Ok(Aggregation::Avg),
            "min" => Ok(Aggregation::Min),
            "max" => Ok(Aggregation::Max),
            "count" => Ok(Aggregation::Count),
            other => Err(StoreError::InvalidArgument(format!("unknown aggregation '{other}'"))),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Avg => "avg",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Count => "count",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn us(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> i64 {
        Utc.with_ymd_and_hms(y, mo, d, h, mi, s).unwrap().timestamp_micros()
    }

    #[test]
    fn hour_windows() {
        let span = DEFAULT_CHUNK_SPAN_US;
        let k = chunk_for("65/1/epc3", us(2020, 11, 23, 10, 30, 0), span);
        assert_eq!(k.window_start, us(2020, 11, 23, 10, 0, 0));
        let k = chunk_for("65/1/epc3", us(2020, 11, 23, 10, 0, 0), span);
        assert_eq!(k.window_start, us(2020, 11, 23, 10, 0, 0));
        let k = chunk_for("x", us(2020, 11, 23, 10, 0, 0) - 1, span);
        assert_eq!(k.window_start, us(2020, 11, 23, 9, 0, 0));
    }

    #[test]
    fn aggregation_names() {
        assert_eq!("AVG".parse::<Aggregation>().unwrap(), Aggregation::Avg);
        assert!("median".parse::<Aggregation>().is_err());
        assert_eq!(Aggregation::Count.to_string(), "count");
    }
}
