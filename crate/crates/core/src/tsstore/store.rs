use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use log::{debug, warn};
use parking_lot::{Mutex, RwLock};

use super::segment::{self, SegmentHeader, HEADER_LEN, RECORD_LEN, SEGMENT_EXT};
use super::{chunk_for, Aggregation, ChunkKey, ChunkMeta, Sample, StoreError, DEFAULT_CHUNK_SPAN_US};

const MANIFEST: &str = "manifest";

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// Chunk span in microseconds. Only used when creating a new store; an
    /// existing store keeps the span recorded in its manifest.
    pub chunk_span_us: i64,
    /// Total segment bytes allowed on disk. `None` means unbounded.
    pub max_bytes: Option<u64>,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions { chunk_span_us: DEFAULT_CHUNK_SPAN_US, max_bytes: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Stored,
    /// Same (sensor, ts) already present; the new value replaced it.
    Duplicate,
    Rejected(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InsertReport {
    pub outcomes: Vec<InsertOutcome>,
    pub stored: usize,
    pub duplicates: usize,
    pub rejected: usize,
}

struct ChunkState {
    key: ChunkKey,
    path: PathBuf,
    seen: HashSet<i64>,
    records: u64,
    min_ts: i64,
    max_ts: i64,
    corrupt: Option<String>,
    sorted: Option<Arc<Vec<(i64, f64)>>>,
}

impl ChunkState {
    fn meta(&self) -> ChunkMeta {
        ChunkMeta {
            key: self.key.clone(),
            records: self.records,
            min_ts: self.min_ts,
            max_ts: self.max_ts,
            path: self.path.clone(),
        }
    }

    /// Sorted, deduplicated view of the flushed records. Later records win.
    fn sorted_view(&mut self) -> Result<Arc<Vec<(i64, f64)>>, StoreError> {
        if let Some(view) = &self.sorted {
            return Ok(Arc::clone(view));
        }
        if self.corrupt.is_some() || self.records == 0 {
            return Ok(Arc::new(Vec::new()));
        }
        let data = segment::read_segment(&self.path)?;
        let mut indexed: Vec<(usize, (i64, f64))> = data.records.into_iter().enumerate().collect();
        indexed.sort_by(|a, b| a.1 .0.cmp(&b.1 .0).then(a.0.cmp(&b.0)));
        let mut view: Vec<(i64, f64)> = Vec::with_capacity(indexed.len());
        for (_, (ts, v)) in indexed {
            match view.last_mut() {
                Some(last) if last.0 == ts => last.1 = v,
                _ => view.push((ts, v)),
            }
        }
        let view = Arc::new(view);
        self.sorted = Some(Arc::clone(&view));
        Ok(view)
    }
}

type ChunkRef = Arc<Mutex<ChunkState>>;

/// Embedded store partitioned by sensor and time window.
///
/// Layout: `<root>/<sanitized sensor key>/<window start µs>.seg` plus a
/// `<root>/manifest` text file listing chunks as of the last flush.
pub struct Store {
    root: PathBuf,
    span: i64,
    max_bytes: Option<u64>,
    bytes_used: AtomicU64,
    sensors: RwLock<HashMap<String, BTreeMap<i64, ChunkRef>>>,
    manifest_lock: Mutex<()>,
}

impl Store {
    pub fn open(root: impl AsRef<Path>, opts: StoreOptions) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        if opts.chunk_span_us <= 0 {
            return Err(StoreError::InvalidArgument("chunk span must be positive".into()));
        }
        let span = match read_manifest_span(&root)? {
            Some(span) if span != opts.chunk_span_us => {
                warn!("store at {} uses chunk span {span} µs; ignoring requested {}", root.display(), opts.chunk_span_us);
                span
            }
            Some(span) => span,
            None => opts.chunk_span_us,
        };
        let store = Store {
            root,
            span,
            max_bytes: opts.max_bytes,
            bytes_used: AtomicU64::new(0),
            sensors: RwLock::new(HashMap::new()),
            manifest_lock: Mutex::new(()),
        };
        store.load_existing()?;
        store.write_manifest()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn chunk_span(&self) -> i64 {
        self.span
    }

    pub fn bytes_used(&self) -> u64 {
        self.bytes_used.load(Ordering::Relaxed)
    }

    fn load_existing(&self) -> Result<(), StoreError> {
        let mut sensors = self.sensors.write();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(sensor) = segment::unsanitize_key(&name) else {
                warn!("skipping unrecognized directory {name}");
                continue;
            };
            for seg in fs::read_dir(entry.path())? {
                let seg = seg?;
                let path = seg.path();
                if path.extension().and_then(|e| e.to_str()) != Some(SEGMENT_EXT) {
                    continue;
                }
                let Some(window_start) = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse::<i64>().ok())
                else {
                    warn!("skipping unrecognized segment {}", path.display());
                    continue;
                };
                let key = ChunkKey { sensor: sensor.clone(), window_start };
                let state = self.load_chunk(key, path)?;
                sensors
                    .entry(sensor.clone())
                    .or_default()
                    .insert(window_start, Arc::new(Mutex::new(state)));
            }
        }
        Ok(())
    }

    fn load_chunk(&self, key: ChunkKey, path: PathBuf) -> Result<ChunkState, StoreError> {
        let mut state = ChunkState {
            key,
            path,
            seen: HashSet::new(),
            records: 0,
            min_ts: i64::MAX,
            max_ts: i64::MIN,
            corrupt: None,
            sorted: None,
        };
        let expected = SegmentHeader::for_key(&state.key, self.span);
        match segment::read_segment(&state.path) {
            Ok(data) if data.header != expected => {
                state.corrupt = Some(format!("header mismatch: {:?} vs {:?}", data.header, expected));
            }
            Ok(data) if data.records.iter().any(|r| r.0 < expected.window_start || r.0 - expected.window_start >= self.span) => {
                state.corrupt = Some("record outside the chunk window".into());
            }
            Ok(data) => {
                if data.torn_bytes > 0 {
                    warn!("{}: dropping {} torn trailing bytes", state.path.display(), data.torn_bytes);
                    let len = (HEADER_LEN + data.records.len() * RECORD_LEN) as u64;
                    fs::OpenOptions::new().write(true).open(&state.path)?.set_len(len)?;
                }
                for (ts, _) in &data.records {
                    state.seen.insert(*ts);
                    state.min_ts = state.min_ts.min(*ts);
                    state.max_ts = state.max_ts.max(*ts);
                }
                state.records = data.records.len() as u64;
            }
            Err(StoreError::CorruptSegment { why, .. }) => state.corrupt = Some(why),
            Err(e) => return Err(e),
        }
        if let Some(why) = &state.corrupt {
            warn!("{} is corrupt ({why}); writes to this chunk are refused", state.path.display());
        }
        let len = fs::metadata(&state.path)?.len();
        self.bytes_used.fetch_add(len, Ordering::Relaxed);
        Ok(state)
    }

    fn chunk(&self, key: &ChunkKey) -> Result<ChunkRef, StoreError> {
        if let Some(c) = self.sensors.read().get(&key.sensor).and_then(|m| m.get(&key.window_start)) {
            return Ok(Arc::clone(c));
        }
        let mut sensors = self.sensors.write();
        let chunks = sensors.entry(key.sensor.clone()).or_default();
        if let Some(c) = chunks.get(&key.window_start) {
            return Ok(Arc::clone(c));
        }
        let path = segment::segment_path(&self.root, key);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let state = ChunkState {
            key: key.clone(),
            path,
            seen: HashSet::new(),
            records: 0,
            min_ts: i64::MAX,
            max_ts: i64::MIN,
            corrupt: None,
            sorted: None,
        };
        let c = Arc::new(Mutex::new(state));
        chunks.insert(key.window_start, Arc::clone(&c));
        Ok(c)
    }

    /// Appends samples to their chunks. Duplicates of (sensor, ts) are
    /// written and win on read.
    pub fn insert(&self, batch: &[Sample]) -> InsertReport {
        let mut report = InsertReport { outcomes: vec![InsertOutcome::Stored; batch.len()], ..Default::default() };
        let mut groups: BTreeMap<ChunkKey, Vec<usize>> = BTreeMap::new();
        for (i, s) in batch.iter().enumerate() {
            if s.ts <= 0 {
                report.outcomes[i] = InsertOutcome::Rejected(format!("ts must be positive, got {}", s.ts));
            } else if !s.v.is_finite() {
                report.outcomes[i] = InsertOutcome::Rejected("value is not finite".into());
            } else if s.sensor.is_empty() {
                report.outcomes[i] = InsertOutcome::Rejected("empty sensor key".into());
            } else {
                groups.entry(chunk_for(&s.sensor, s.ts, self.span)).or_default().push(i);
            }
        }
        for (key, members) in groups {
            if let Err(e) = self.insert_group(&key, &members, batch, &mut report.outcomes) {
                for &i in &members {
                    report.outcomes[i] = InsertOutcome::Rejected(e.to_string());
                }
            }
        }
        for o in &report.outcomes {
            match o {
                InsertOutcome::Stored => report.stored += 1,
                InsertOutcome::Duplicate => report.duplicates += 1,
                InsertOutcome::Rejected(_) => report.rejected += 1,
            }
        }
        report
    }

    fn insert_group(
        &self,
        key: &ChunkKey,
        members: &[usize],
        batch: &[Sample],
        outcomes: &mut [InsertOutcome],
    ) -> Result<(), StoreError> {
        let chunk = self.chunk(key)?;
        let mut state = chunk.lock();
        if let Some(why) = &state.corrupt {
            return Err(StoreError::CorruptSegment { path: state.path.clone(), why: why.clone() });
        }
        let new_file = state.records == 0 && !state.path.exists();
        let needed = members.len() as u64 * RECORD_LEN as u64 + if new_file { HEADER_LEN as u64 } else { 0 };
        if let Some(max) = self.max_bytes {
            let used = self.bytes_used.load(Ordering::Relaxed);
            if used + needed > max {
                return Err(StoreError::StorageFull { used, max });
            }
        }
        let mut bytes = Vec::with_capacity(members.len() * RECORD_LEN);
        for &i in members {
            segment::encode_record(batch[i].ts, batch[i].v, &mut bytes);
        }
        let header = SegmentHeader::for_key(key, self.span);
        let written = segment::append_records(&state.path, &header, &bytes)?;
        self.bytes_used.fetch_add(written, Ordering::Relaxed);
        for &i in members {
            let ts = batch[i].ts;
            if !state.seen.insert(ts) {
                outcomes[i] = InsertOutcome::Duplicate;
            }
            state.min_ts = state.min_ts.min(ts);
            state.max_ts = state.max_ts.max(ts);
        }
        state.records += members.len() as u64;
        state.sorted = None;
        Ok(())
    }

    fn chunks_overlapping(&self, sensor: &str, t0: i64, t1: i64) -> Vec<ChunkRef> {
        let sensors = self.sensors.read();
        let Some(chunks) = sensors.get(sensor) else { return Vec::new() };
        let first = t0.div_euclid(self.span) * self.span;
        chunks.range(first..t1).map(|(_, c)| Arc::clone(c)).collect()
    }

    /// Samples with `t0 <= ts < t1`, ascending by ts.
    pub fn query_range(&self, sensor: &str, t0: i64, t1: i64) -> Result<Vec<Sample>, StoreError> {
        if t0 > t1 {
            return Err(StoreError::InvalidArgument(format!("t0 {t0} is after t1 {t1}")));
        }
        let mut out = Vec::new();
        for chunk in self.chunks_overlapping(sensor, t0, t1) {
            let view = chunk.lock().sorted_view()?;
            let lo = view.partition_point(|r| r.0 < t0);
            let hi = view.partition_point(|r| r.0 < t1);
            out.extend(view[lo..hi].iter().map(|&(ts, v)| Sample { sensor: sensor.to_string(), ts, v }));
        }
        Ok(out)
    }

    /// Aggregates `[t0, t1)` into buckets aligned to multiples of `bucket`.
    /// Empty buckets are omitted.
    pub fn downsample(
        &self,
        sensor: &str,
        t0: i64,
        t1: i64,
        bucket: i64,
        agg: Aggregation,
    ) -> Result<Vec<(i64, f64)>, StoreError> {
        if bucket <= 0 {
            return Err(StoreError::InvalidArgument("bucket must be positive".into()));
        }
        let samples = self.query_range(sensor, t0, t1)?;
        let mut out: Vec<(i64, f64)> = Vec::new();
        let mut current: Option<(i64, Accumulator)> = None;
        for s in &samples {
            let start = s.ts.div_euclid(bucket) * bucket;
            match &mut current {
                Some((b, acc)) if *b == start => acc.push(s.v),
                _ => {
                    if let Some((b, acc)) = current.take() {
                        out.push((b, acc.finish(agg)));
                    }
                    let mut acc = Accumulator::default();
                    acc.push(s.v);
                    current = Some((start, acc));
                }
            }
        }
        if let Some((b, acc)) = current {
            out.push((b, acc.finish(agg)));
        }
        Ok(out)
    }

    /// Deletes whole chunks whose window ended at or before `now - keep`.
    pub fn retention_sweep(&self, now: i64, keep: i64) -> Result<Vec<ChunkKey>, StoreError> {
        if keep <= 0 {
            return Err(StoreError::InvalidArgument("keep must be positive".into()));
        }
        let cutoff = now.saturating_sub(keep);
        let mut dropped = Vec::new();
        {
            let mut sensors = self.sensors.write();
            for (sensor, chunks) in sensors.iter_mut() {
                let doomed: Vec<i64> = chunks
                    .keys()
                    .copied()
                    .filter(|w| w.saturating_add(self.span) <= cutoff)
                    .collect();
                for w in doomed {
                    let chunk = chunks.remove(&w).expect("key listed above");
                    let state = chunk.lock();
                    if let Ok(meta) = fs::metadata(&state.path) {
                        self.bytes_used.fetch_sub(meta.len().min(self.bytes_used()), Ordering::Relaxed);
                        fs::remove_file(&state.path)?;
                    }
                    dropped.push(ChunkKey { sensor: sensor.clone(), window_start: w });
                }
            }
            sensors.retain(|sensor, chunks| {
                if chunks.is_empty() {
                    let dir = self.root.join(segment::sanitize_key(sensor));
                    let _ = fs::remove_dir(dir);
                    false
                } else {
                    true
                }
            });
        }
        dropped.sort();
        debug!("retention dropped {} chunks", dropped.len());
        self.write_manifest()?;
        Ok(dropped)
    }

    pub fn sensors(&self) -> Vec<String> {
        let mut v: Vec<String> = self.sensors.read().keys().cloned().collect();
        v.sort();
        v
    }

    pub fn chunks(&self) -> Vec<ChunkMeta> {
        let sensors = self.sensors.read();
        let mut out: Vec<ChunkMeta> = sensors
            .values()
            .flat_map(|m| m.values())
            .map(|c| c.lock().meta())
            .collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    /// Total records across all chunks, duplicates included.
    pub fn record_count(&self) -> u64 {
        self.chunks().iter().map(|c| c.records).sum()
    }

    /// Rewrites the manifest atomically.
    pub fn flush(&self) -> Result<(), StoreError> {
        self.write_manifest()
    }

    pub fn close(self) -> Result<(), StoreError> {
        self.write_manifest()
    }

    fn write_manifest(&self) -> Result<(), StoreError> {
        let _guard = self.manifest_lock.lock();
        let mut text = format!("# paveflow manifest v1 span_us={}\n", self.span);
        text.push_str("# sensor\twindow_start_us\trecords\tmin_ts_us\tmax_ts_us\n");
        for c in self.chunks() {
            if c.records == 0 {
                continue;
            }
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                c.key.sensor, c.key.window_start, c.records, c.min_ts, c.max_ts
            ));
        }
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, self.root.join(MANIFEST))?;
        Ok(())
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        if let Err(e) = self.write_manifest() {
            warn!("failed to write manifest on drop: {e}");
        }
    }
}

fn read_manifest_span(root: &Path) -> Result<Option<i64>, StoreError> {
    let path = root.join(MANIFEST);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let first = text.lines().next().unwrap_or_default();
    let span = first
        .split_whitespace()
        .find_map(|w| w.strip_prefix("span_us="))
        .and_then(|s| s.parse::<i64>().ok())
        .filter(|s| *s > 0)
        .ok_or_else(|| StoreError::InvalidArgument(format!("unreadable manifest header '{first}'")))?;
    Ok(Some(span))
}

#[derive(Debug, Default)]
struct Accumulator {
    count: u64,
    sum: f64,
    min: f64,
    max: f64,
}

impl Accumulator {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += v;
    }

    fn finish(&self, agg: Aggregation) -> f64 {
        match agg {
            Aggregation::Avg => self.sum / self.count as f64,
            Aggregation::Min => self.min,
            Aggregation::Max => self.max,
            Aggregation::Count => self.count as f64,
        }
    }
}
