//! Broker-to-store connector.
//!
//! Subscribes with a wildcard, strictly validates each payload, maps the
//! subject `site.<s>.daq.<d>.sensor.<id>` to the store key `<s>/<d>/<id>`
//! and writes in batches. Every received message ends up counted exactly
//! once, either as accepted or under one reject reason.

mod http;
mod ingest;
mod metrics;
mod replay;
mod transform;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam::channel::RecvTimeoutError;

use crate::broker::Client;
use crate::tsstore::Store;
use crate::wire::Subject;

pub use http::{fetch_metrics, serve_metrics, MetricsServer, MetricsSource};
pub use ingest::{BatchPolicy, Ingestor, InsertObserver};
pub use metrics::{IngestMetrics, LatencyHistogram, LATENCY_BOUNDS_US};
pub use replay::{replay, ReplayConfig, ReplayReport};
pub use transform::{sensor_key, transform, transform_at, Reject, RejectReason, StoreRecord};

#[derive(Debug, Clone)]
pub struct ConnectorOptions {
    pub subject: Subject,
    pub batch: BatchPolicy,
    pub reconnect_base: Duration,
    pub reconnect_cap: Duration,
}

impl Default for ConnectorOptions {
    fn default() -> Self {
        ConnectorOptions {
            subject: Subject::pattern("site.>").expect("static pattern"),
            batch: BatchPolicy::default(),
            reconnect_base: Duration::from_secs(1),
            reconnect_cap: Duration::from_secs(30),
        }
    }
}

/// A running connector. Dropping it without [`ConnectorHandle::stop`] also
/// stops it, discarding the final metrics.
pub struct ConnectorHandle {
    ingestor: Option<Arc<Ingestor>>,
    consumer: Option<JoinHandle<()>>,
    stop: Arc<AtomicBool>,
    subscribed: Arc<AtomicBool>,
}

/// Starts consuming from `broker` into `store`. Connection failures are
/// retried with exponential backoff between `reconnect_base` and
/// `reconnect_cap`.
pub fn run(
    broker: SocketAddr,
    store: Arc<Store>,
    opts: ConnectorOptions,
    observer: Option<InsertObserver>,
) -> ConnectorHandle {
    let ingestor = Arc::new(Ingestor::start(store, opts.batch.clone(), observer));
    let stop = Arc::new(AtomicBool::new(false));
    let subscribed = Arc::new(AtomicBool::new(false));
    let consumer = {
        let ingestor = Arc::clone(&ingestor);
        let stop = Arc::clone(&stop);
        let subscribed = Arc::clone(&subscribed);
        thread::Builder::new()
            .name("connector".into())
            .spawn(move || consume(broker, &opts, &ingestor, &stop, &subscribed))
            .expect("spawn connector")
    };
    ConnectorHandle { ingestor: Some(ingestor), consumer: Some(consumer), stop, subscribed }
}

fn consume(broker: SocketAddr, opts: &ConnectorOptions, ingestor: &Ingestor, stop: &AtomicBool, subscribed: &AtomicBool) {
    let mut backoff = opts.reconnect_base;
    while !stop.load(Ordering::SeqCst) {
        let client = Client::connect(broker).map_err(|e| e.to_string()).and_then(|c| {
            c.subscribe(&opts.subject).map_err(|e| e.to_string())?;
            c.flush(Duration::from_secs(5)).map_err(|e| e.to_string())?;
            Ok(c)
        });
        let client = match client {
            Ok(c) => c,
            Err(e) => {
                log::warn!("connector: broker {broker} unavailable ({e}); retrying in {backoff:?}");
                sleep_unless_stopped(backoff, stop);
                backoff = (backoff * 2).min(opts.reconnect_cap);
                continue;
            }
        };
        log::info!("connector: subscribed to {} on {broker}", opts.subject);
        subscribed.store(true, Ordering::SeqCst);
        backoff = opts.reconnect_base;
        while !stop.load(Ordering::SeqCst) {
            match client.messages().recv_timeout(Duration::from_millis(50)) {
                Ok(m) => {
                    ingestor.offer(m.subject, m.payload);
                }
                Err(RecvTimeoutError::Timeout) if client.is_connected() => {}
                Err(_) => break,
            }
        }
        subscribed.store(false, Ordering::SeqCst);
        if let Some(e) = client.server_error() {
            log::warn!("connector: broker closed the session: {e}");
        }
        client.close();
    }
}

fn sleep_unless_stopped(d: Duration, stop: &AtomicBool) {
    let until = Instant::now() + d;
    while !stop.load(Ordering::SeqCst) && Instant::now() < until {
        thread::sleep(Duration::from_millis(10).min(until.saturating_duration_since(Instant::now())));
    }
}

impl ConnectorHandle {
    pub fn is_subscribed(&self) -> bool {
        self.subscribed.load(Ordering::SeqCst)
    }

    pub fn wait_subscribed(&self, timeout: Duration) -> bool {
        let until = Instant::now() + timeout;
        while !self.is_subscribed() {
            if Instant::now() >= until {
                return false;
            }
            thread::sleep(Duration::from_millis(5));
        }
        true
    }

    pub fn metrics(&self) -> IngestMetrics {
        self.ingestor.as_ref().map(|i| i.metrics()).unwrap_or_default()
    }

    pub fn ingestor(&self) -> &Ingestor {
        self.ingestor.as_ref().expect("connector running")
    }

    /// Live metrics for [`serve_metrics`]; all zero once the connector is gone.
    pub fn metrics_source(&self) -> MetricsSource {
        let weak = self.ingestor.as_ref().map(Arc::downgrade);
        Arc::new(move || weak.as_ref().and_then(|w| w.upgrade()).map(|i| i.metrics()).unwrap_or_default())
    }

    /// Stops consuming, writes everything queued and returns final metrics.
    pub fn stop(mut self) -> IngestMetrics {
        self.halt().unwrap_or_default()
    }

    fn halt(&mut self) -> Option<IngestMetrics> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(c) = self.consumer.take() {
            let _ = c.join();
        }
        self.ingestor.take().map(|ing| ing.finish())
    }
}

impl Drop for ConnectorHandle {
    fn drop(&mut self) {
        self.halt();
    }
}
