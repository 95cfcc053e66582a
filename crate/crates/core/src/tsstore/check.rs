use std::fs;
use std::path::Path;

use super::segment::{self, fnv1a64, SEGMENT_EXT};
use super::StoreError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub segments: usize,
    pub records: u64,
    pub violations: Vec<String>,
}

impl CheckReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans every segment under `root` straight from disk and reports any record
/// outside its chunk window, header/key mismatches, and torn tails.
pub fn check_segments(root: &Path) -> Result<CheckReport, StoreError> {
    let mut report = CheckReport::default();
    let mut dirs: Vec<_> = fs::read_dir(root)?.collect::<Result<_, _>>()?;
    dirs.sort_by_key(|e| e.file_name());
    for dir in dirs {
        if !dir.file_type()?.is_dir() {
            continue;
        }
        let dir_name = dir.file_name().to_string_lossy().into_owned();
        let Some(sensor) = segment::unsanitize_key(&dir_name) else {
            report.violations.push(format!("{dir_name}: directory name is not a sensor key"));
            continue;
        };
        let mut files: Vec<_> = fs::read_dir(dir.path())?.collect::<Result<_, _>>()?;
        files.sort_by_key(|e| e.file_name());
        for file in files {
            let path = file.path();
            if path.extension().and_then(|e| e.to_str()) != Some(SEGMENT_EXT) {
                continue;
            }
            report.segments += 1;
            let shown = path.display();
            let data = match segment::read_segment(&path) {
                Ok(d) => d,
                Err(e) => {
                    report.violations.push(format!("{shown}: {e}"));
                    continue;
                }
            };
            let h = data.header;
            if h.key_hash != fnv1a64(sensor.as_bytes()) {
                report.violations.push(format!("{shown}: key hash does not match '{sensor}'"));
            }
            let named_start = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<i64>().ok());
            if named_start != Some(h.window_start) {
                report.violations.push(format!("{shown}: file name disagrees with header window {}", h.window_start));
            }
            if h.span <= 0 || h.window_start.rem_euclid(h.span) != 0 {
                report.violations.push(format!("{shown}: window {} not aligned to span {}", h.window_start, h.span));
            }
            if data.torn_bytes > 0 {
                report.violations.push(format!("{shown}: {} torn trailing bytes", data.torn_bytes));
            }
            let end = h.window_start.saturating_add(h.span);
            for (i, (ts, _)) in data.records.iter().enumerate() {
                if *ts < h.window_start || *ts >= end {
                    report.violations.push(format!("{shown}: record {i} ts {ts} outside [{}, {end})", h.window_start));
                }
            }
            report.records += data.records.len() as u64;
        }
    }
    Ok(report)
}
