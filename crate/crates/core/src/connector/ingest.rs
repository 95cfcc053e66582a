use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::{bounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use parking_lot::{Mutex, RwLock};

use super::metrics::{IngestMetrics, MetricsState};
use super::transform::{transform_at, RejectReason, StoreRecord};
use crate::tsstore::{InsertOutcome, Store};
use crate::wire::Subject;

#[derive(Debug, Clone)]
pub struct BatchPolicy {
    pub max_records: usize,
    pub max_age: Duration,
    /// Inbound queue bound; messages arriving while it is full are dropped
    /// and counted as overflow rejects.
    pub queue_capacity: usize,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        BatchPolicy { max_records: 500, max_age: Duration::from_millis(200), queue_capacity: 10_000 }
    }
}

/// Called once per stored record with the insert wall time in microseconds.
pub type InsertObserver = Arc<dyn Fn(&StoreRecord, i64) + Send + Sync>;

struct Inbound {
    subject: Subject,
    payload: Vec<u8>,
    received_us: i64,
}

/// Bounded queue plus a writer thread that transforms, batches and inserts.
pub struct Ingestor {
    tx: RwLock<Option<Sender<Inbound>>>,
    metrics: Arc<Mutex<MetricsState>>,
    writer: Mutex<Option<JoinHandle<()>>>,
}

impl Ingestor {
    pub fn start(store: Arc<Store>, policy: BatchPolicy, observer: Option<InsertObserver>) -> Ingestor {
        let (tx, rx) = bounded(policy.queue_capacity.max(1));
        let metrics = Arc::new(Mutex::new(MetricsState::default()));
        let writer = {
            let metrics = Arc::clone(&metrics);
            thread::Builder::new()
                .name("ingest-writer".into())
                .spawn(move || write_loop(rx, &store, &policy, &metrics, observer.as_deref()))
                .expect("spawn ingest writer")
        };
        Ingestor { tx: RwLock::new(Some(tx)), metrics, writer: Mutex::new(Some(writer)) }
    }

    /// Queues a message without blocking. Returns false when the queue is
    /// full; the message is then counted as an overflow reject.
    pub fn offer(&self, subject: Subject, payload: Vec<u8>) -> bool {
        let item = Inbound { subject, payload, received_us: crate::now_us() };
        match self.tx.read().as_ref().map(|tx| tx.try_send(item)) {
            Some(Ok(())) => true,
            Some(Err(TrySendError::Full(_))) | Some(Err(TrySendError::Disconnected(_))) | None => {
                self.metrics.lock().reject(RejectReason::Overflow);
                false
            }
        }
    }

    /// Queues a message, waiting for room.
    pub fn offer_blocking(&self, subject: Subject, payload: Vec<u8>) {
        let item = Inbound { subject, payload, received_us: crate::now_us() };
        if self.tx.read().as_ref().map(|tx| tx.send(item).is_err()).unwrap_or(true) {
            self.metrics.lock().reject(RejectReason::Overflow);
        }
    }

    pub fn pending(&self) -> usize {
        self.tx.read().as_ref().map_or(0, |tx| tx.len())
    }

    pub fn metrics(&self) -> IngestMetrics {
        self.metrics.lock().snapshot(crate::now_us())
    }

    /// Flushes everything queued and stops the writer. Later offers are
    /// counted as overflow.
    pub fn finish(&self) -> IngestMetrics {
        self.shutdown();
        self.metrics()
    }

    fn shutdown(&self) {
        self.tx.write().take();
        let writer = self.writer.lock().take();
        if let Some(w) = writer {
            let _ = w.join();
        }
    }
}

impl Drop for Ingestor {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn write_loop(
    rx: Receiver<Inbound>,
    store: &Store,
    policy: &BatchPolicy,
    metrics: &Mutex<MetricsState>,
    observer: Option<&(dyn Fn(&StoreRecord, i64) + Send + Sync)>,
) {
    let max = policy.max_records.max(1);
    let mut batch: Vec<Inbound> = Vec::with_capacity(max);
    let mut opened = Instant::now();
    loop {
        let wait = if batch.is_empty() {
            Duration::from_millis(100)
        } else {
            policy.max_age.saturating_sub(opened.elapsed())
        };
        match rx.recv_timeout(wait) {
            Ok(item) => {
                if batch.is_empty() {
                    opened = Instant::now();
                }
                batch.push(item);
                while batch.len() < max {
                    match rx.try_recv() {
                        Ok(item) => batch.push(item),
                        Err(_) => break,
                    }
                }
                if batch.len() >= max || opened.elapsed() >= policy.max_age {
                    flush(&mut batch, store, metrics, observer);
                }
            }
            Err(RecvTimeoutError::Timeout) => {
                if !batch.is_empty() && opened.elapsed() >= policy.max_age {
                    flush(&mut batch, store, metrics, observer);
                }
                metrics.lock().prune(crate::now_us());
            }
            Err(RecvTimeoutError::Disconnected) => {
                flush(&mut batch, store, metrics, observer);
                break;
            }
        }
    }
    if let Err(e) = store.flush() {
        log::error!("store flush failed: {e}");
    }
}

fn flush(
    batch: &mut Vec<Inbound>,
    store: &Store,
    metrics: &Mutex<MetricsState>,
    observer: Option<&(dyn Fn(&StoreRecord, i64) + Send + Sync)>,
) {
    if batch.is_empty() {
        return;
    }
    let mut records = Vec::with_capacity(batch.len());
    let mut rejects = Vec::new();
    for item in batch.drain(..) {
        match transform_at(&item.subject, &item.payload, item.received_us) {
            Ok(r) => records.push(r),
            Err(rej) => {
                log::debug!("rejected {}: {}", item.subject, rej.detail);
                rejects.push(rej.reason);
            }
        }
    }
    let samples: Vec<_> = records.iter().map(StoreRecord::sample).collect();
    let report = store.insert(&samples);
    let inserted_us = crate::now_us();
    // one lock per batch so every snapshot satisfies received == accepted + rejected
    let mut m = metrics.lock();
    for reason in rejects {
        m.reject(reason);
    }
    for (record, outcome) in records.iter().zip(&report.outcomes) {
        match outcome {
            InsertOutcome::Stored | InsertOutcome::Duplicate => {
                m.accept(&record.sensor, record.seq, record.ts, inserted_us);
                if let Some(obs) = observer {
                    obs(record, inserted_us);
                }
            }
            InsertOutcome::Rejected(why) => {
                log::warn!("store rejected {}@{}: {why}", record.sensor, record.ts);
                m.reject(RejectReason::Store);
            }
        }
    }
}
