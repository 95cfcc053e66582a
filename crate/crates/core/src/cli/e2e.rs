use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::Serialize;

use crate::broker::{self, BrokerLimits, Client};
use crate::connector::{self, ConnectorOptions, InsertObserver, StoreRecord};
use crate::daqsim::{DaqSimulator, Scenario};
use crate::tsstore::{Store, StoreOptions};
use crate::wire::Subject;

/// Settings for one local run of simulator, broker and connector.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Broker listen address; `None` picks a free loopback port.
    pub broker: Option<SocketAddr>,
    pub store_root: PathBuf,
    /// `None` runs the built-in three-sensor scenario.
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's duration, simulated seconds.
    pub duration_s: Option<u64>,
    /// Simulated seconds per wall second.
    pub speedup: f64,
    /// Serve `GET /metrics` on this loopback port while running.
    pub metrics_port: Option<u16>,
}

impl PipelineConfig {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            broker: None,
            store_root: store_root.into(),
            scenario: None,
            duration_s: None,
            speedup: 1.0,
            metrics_port: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.speedup >= 1.0) || !self.speedup.is_finite() {
            return Err(format!("speedup must be at least 1, got {}", self.speedup));
        }
        if self.duration_s == Some(0) {
            return Err("duration must be positive".into());
        }
        Ok(())
    }
}

/// Outcome of [`run_e2e`]. Latencies run from the simulator's publish call
/// to the connector's store insert, in wall-clock milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct E2EReport {
    pub sensors: usize,
    pub simulated_s: u64,
    pub speedup: f64,
    pub published: u64,
    pub received: u64,
    pub stored: u64,
    pub rejected: u64,
    pub seq_gaps: u64,
    pub duplicate_seq: u64,
    pub latency_p50_ms: f64,
    pub latency_p99_ms: f64,
    pub latency_max_ms: f64,
    pub wall_s: f64,
    pub store_root: String,
    /// Set when the run aborted; the counts above are partial.
    pub error: Option<String>,
}

impl E2EReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "sensors {}  simulated {} s  speedup {}\n\
             published {}  received {}  stored {}  rejected {}\n\
             seq gaps {}  duplicate seq {}\n\
             latency p50 {:.3} ms  p99 {:.3} ms  max {:.3} ms\n\
             wall {:.2} s  store {}\n",
            self.sensors,
            self.simulated_s,
            self.speedup,
            self.published,
            self.received,
            self.stored,
            self.rejected,
            self.seq_gaps,
            self.duplicate_seq,
            self.latency_p50_ms,
            self.latency_p99_ms,
            self.latency_max_ms,
            self.wall_s,
            self.store_root,
        );
        if let Some(e) = &self.error {
            s.push_str(&format!("ERROR: {e}\n"));
        }
        s
    }
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[i64], q: f64) -> i64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Starts a broker, a connector writing to `store_root` and the simulator,
/// runs the scenario at `speedup`, drains, and reports. The scenario start
/// is moved to the current wall-clock second so payload timestamps are
/// recent. On failure the error carries the partial report.
pub fn run_e2e(config: &PipelineConfig) -> Result<E2EReport, Box<E2EReport>> {
    let began = Instant::now();
    let mut report = E2EReport {
        speedup: config.speedup,
        store_root: config.store_root.display().to_string(),
        ..Default::default()
    };
    macro_rules! bail {
        ($($arg:tt)*) => {{
            report.error = Some(format!($($arg)*));
            report.wall_s = began.elapsed().as_secs_f64();
            return Err(Box::new(report));
        }};
    }
    if let Err(e) = config.validate() {
        bail!("{e}");
    }
    let mut scenario = match &config.scenario {
        Some(p) => match Scenario::load(p) {
            Ok(s) => s,
            Err(e) => bail!("{}: {e}", p.display()),
        },
        None => Scenario::example(),
    };
    if let Some(d) = config.duration_s {
        scenario.duration_s = d;
    }
    let now_s = crate::now_us() / 1_000_000;
    scenario.start = DateTime::<Utc>::from_timestamp(now_s, 0).expect("current time in range");
    report.sensors = scenario.sensors.len();
    report.simulated_s = scenario.duration_s;

    let broker_addr = config.broker.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
    let broker = match broker::serve(broker_addr, BrokerLimits::default()) {
        Ok(b) => b,
        Err(e) => bail!("broker failed to start on {broker_addr}: {e}"),
    };
    let store = match Store::open(&config.store_root, StoreOptions::default()) {
        Ok(s) => Arc::new(s),
        Err(e) => bail!("store failed to open: {e}"),
    };

    let published_at: Arc<Mutex<HashMap<(String, u64), i64>>> = Arc::default();
    let latencies: Arc<Mutex<Vec<i64>>> = Arc::default();
    let observer: InsertObserver = {
        let published_at = Arc::clone(&published_at);
        let latencies = Arc::clone(&latencies);
        Arc::new(move |r: &StoreRecord, inserted_us: i64| {
            if let Some(p) = published_at.lock().remove(&(r.sensor.clone(), r.seq)) {
                latencies.lock().push(inserted_us - p);
            }
        })
    };
    let opts = ConnectorOptions { subject: Subject::pattern("site.>").expect("static pattern"), ..Default::default() };
    let conn = connector::run(broker.local_addr(), Arc::clone(&store), opts, Some(observer));
    if !conn.wait_subscribed(Duration::from_secs(10)) {
        bail!("connector did not subscribe within 10 s");
    }
    let _metrics_http = match config.metrics_port {
        Some(port) => match connector::serve_metrics(("127.0.0.1", port), conn.metrics_source()) {
            Ok(s) => Some(s),
            Err(e) => bail!("metrics endpoint failed on port {port}: {e}"),
        },
        None => None,
    };

    let mut sim = match DaqSimulator::new(scenario.clone()) {
        Ok(s) => s,
        Err(e) => bail!("{e}"),
    };
    let client = match Client::connect(broker.local_addr()) {
        Ok(c) => c,
        Err(e) => bail!("simulator could not connect: {e}"),
    };
    let key_prefix = format!("{}/{}/", scenario.site, scenario.daq);
    let tick = Duration::from_secs_f64(1.0 / config.speedup);
    let sim_began = Instant::now();
    while !sim.finished() {
        let due = sim_began + tick * (sim.elapsed() as u32 + 1);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
        let mut publisher = |subject: &Subject, payload: &[u8]| -> Result<(), String> {
            let sensor = subject.tokens().last().cloned().unwrap_or_default();
            let seq = crate::wire::SamplePayload::from_json(payload).map(|p| p.seq).unwrap_or(0);
            published_at.lock().insert((format!("{key_prefix}{sensor}"), seq), crate::now_us());
            client.publish(subject, payload).map_err(|e| e.to_string())
        };
        report.published += sim.tick(&mut publisher).len() as u64;
    }
    if let Err(e) = client.flush(Duration::from_secs(5)) {
        log::warn!("simulator flush failed: {e}");
    }

    // drain: everything published should reach the connector shortly
    let deadline = Instant::now() + Duration::from_secs(10);
    while conn.metrics().received < report.published && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(10));
    }
    client.close();
    let metrics = conn.stop();
    broker.shutdown();

    let end = scenario.start_us() + (scenario.duration_s as i64 + 1) * 1_000_000;
    for s in &scenario.sensors {
        let key = format!("{key_prefix}{}", s.id);
        match store.query_range(&key, scenario.start_us(), end) {
            Ok(v) => report.stored += v.len() as u64,
            Err(e) => bail!("store query failed: {e}"),
        }
    }
    let mut lat = std::mem::take(&mut *latencies.lock());
    lat.sort_unstable();
    let ms = |us: i64| us as f64 / 1000.0;
    report.received = metrics.received;
    report.rejected = metrics.rejected_total();
    report.seq_gaps = metrics.seq_gaps;
    report.duplicate_seq = metrics.duplicate_seq;
    report.latency_p50_ms = ms(quantile(&lat, 0.50));
    report.latency_p99_ms = ms(quantile(&lat, 0.99));
    report.latency_max_ms = ms(lat.last().copied().unwrap_or(0));
    report.wall_s = began.elapsed().as_secs_f64();
    if let Err(e) = store.flush() {
        bail!("store flush failed: {e}");
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<i64> = (1..=100).collect();
        assert_eq!(quantile(&v, 0.5), 50);
        assert_eq!(quantile(&v, 0.99), 99);
        assert_eq!(quantile(&[], 0.99), 0);
    }

    #[test]
    fn empty_scenario() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        std::fs::write(&path, r#"{"site":"1","daq":"1","start":"2024-01-01T00:00:00Z","duration_s":3}"#).unwrap();
        let mut cfg = PipelineConfig::new(dir.path().join("store"));
        cfg.scenario = Some(path);
        cfg.speedup = 100.0;
        let r = run_e2e(&cfg).unwrap();
        assert_eq!((r.published, r.stored, r.rejected), (0, 0, 0));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = PipelineConfig::new("/nonexistent");
        cfg.speedup = 0.5;
        assert!(run_e2e(&cfg).unwrap_err().error.is_some());
    }
}
