use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};

use super::config::{layer, ConfigFile, DEFAULT_BROKER, DEFAULT_METRICS, DEFAULT_SUBJECT};
use super::{
    run_e2e, BrokerCmd, Cli, CliError, Command, ConnectorCmd, DaqsimCmd, DspCmd, E2eCmd, EtlCmd, MetricsFormat,
    PipelineConfig, QueryArgs, ReportFormat, StoreCmd,
};
use crate::broker::{self, BrokerLimits, Client};
use crate::connector::{self, BatchPolicy, ConnectorOptions, Ingestor, ReplayConfig};
use crate::daqsim::{DaqSimulator, Scenario};
use crate::dsp::{savgol_filter, DspError};
use crate::etl::{self, SensorKind};
use crate::tsstore::{check_segments, Aggregation, Store, StoreOptions};
use crate::wire::Subject;

type CmdResult = Result<(), CliError>;

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn stdout_write(text: &str) -> CmdResult {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(runtime)
}

fn resolve_addr(s: &str) -> Result<SocketAddr, CliError> {
    s.to_socket_addrs()
        .map_err(|e| usage(format!("bad address '{s}': {e}")))?
        .next()
        .ok_or_else(|| usage(format!("address '{s}' resolves to nothing")))
}

fn require_store(arg: Option<PathBuf>, file: &ConfigFile) -> Result<PathBuf, CliError> {
    layer(arg, &file.store).ok_or_else(|| usage("no store root; pass --store, set PAVEH_STORE or add 'store' to the config"))
}

/// Sleeps for `run_for`, or forever when it is `None`.
fn park(run_for: Option<Duration>) {
    let until = run_for.map(|d| Instant::now() + d);
    loop {
        match until {
            Some(u) if Instant::now() >= u => return,
            Some(u) => thread::sleep((u - Instant::now()).min(Duration::from_millis(200))),
            None => thread::sleep(Duration::from_secs(1)),
        }
    }
}

pub fn dispatch(cli: Cli) -> CmdResult {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Broker(c) => broker_cmd(c, &file),
        Command::Daqsim(c) => daqsim_cmd(c, &file),
        Command::Connector(c) => connector_cmd(c, &file),
        Command::Store(c) => store_cmd(c, &file),
        Command::Etl(c) => etl_cmd(c),
        Command::Dsp(c) => dsp_cmd(c),
        Command::E2e(c) => e2e_cmd(c, &file),
    }
}

fn broker_cmd(cmd: BrokerCmd, file: &ConfigFile) -> CmdResult {
    let BrokerCmd::Serve { listen, max_payload, queue, keepalive, run_for } = cmd;
    let listen = layer(listen, &file.listen).unwrap_or_else(|| DEFAULT_BROKER.to_string());
    let mut limits = BrokerLimits::default();
    if let Some(m) = layer(max_payload, &file.max_payload) {
        limits.max_payload = m;
    }
    if let Some(q) = layer(queue, &file.queue) {
        limits.queue_frames = q;
    }
    if let Some(k) = keepalive {
        limits.keepalive = k;
    }
    let handle = broker::serve(resolve_addr(&listen)?, limits).map_err(runtime)?;
    log::info!("broker listening on {}", handle.local_addr());
    park(run_for);
    let stats = handle.stats();
    log::info!(
        "broker stopping: {} published, {} delivered, {} evicted",
        stats.published,
        stats.delivered,
        stats.evicted
    );
    handle.shutdown();
    Ok(())
}

fn daqsim_cmd(cmd: DaqsimCmd, file: &ConfigFile) -> CmdResult {
    let DaqsimCmd::Run { broker, scenario, site, daq, speedup, duration } = cmd;
    let broker = layer(broker, &file.broker).unwrap_or_else(|| DEFAULT_BROKER.to_string());
    let speedup = layer(speedup, &file.speedup).unwrap_or(1.0);
    if !(speedup >= 1.0) {
        return Err(usage(format!("--speedup must be at least 1, got {speedup}")));
    }
    let mut sc = match layer(scenario, &file.scenario) {
        Some(p) => Scenario::load(&p).map_err(usage)?,
        None => Scenario::example(),
    };
    if let Some(s) = site {
        sc.site = s;
    }
    if let Some(d) = daq {
        sc.daq = d;
    }
    if let Some(d) = duration {
        sc.duration_s = d;
    }
    let mut sim = DaqSimulator::new(sc).map_err(usage)?;
    let client = Client::connect(resolve_addr(&broker)?).map_err(|e| runtime(format!("broker {broker}: {e}")))?;
    let tick = Duration::from_secs_f64(1.0 / speedup);
    let began = Instant::now();
    let mut published = 0u64;
    while !sim.finished() {
        let due = began + tick * (sim.elapsed() as u32 + 1);
        if let Some(w) = due.checked_duration_since(Instant::now()) {
            thread::sleep(w);
        }
        let mut publish = |s: &Subject, p: &[u8]| client.publish(s, p).map_err(|e| e.to_string());
        published += sim.tick(&mut publish).len() as u64;
        if !client.is_connected() {
            return Err(runtime(format!("lost broker connection after {published} publishes")));
        }
    }
    client.flush(Duration::from_secs(5)).map_err(runtime)?;
    client.close();
    let summary = serde_json::json!({ "published": published, "simulated_s": sim.elapsed() });
    stdout_write(&format!("{summary}\n"))
}

fn connector_cmd(cmd: ConnectorCmd, file: &ConfigFile) -> CmdResult {
    match cmd {
        ConnectorCmd::Run { broker, store, subject, metrics_listen, run_for } => {
            let broker = layer(broker, &file.broker).unwrap_or_else(|| DEFAULT_BROKER.to_string());
            let subject = layer(subject, &file.subject).unwrap_or_else(|| DEFAULT_SUBJECT.to_string());
            let subject = Subject::pattern(&subject).map_err(usage)?;
            let root = require_store(store, file)?;
            let store = Arc::new(Store::open(&root, StoreOptions::default()).map_err(runtime)?);
            let opts = ConnectorOptions { subject, ..Default::default() };
            let handle = connector::run(resolve_addr(&broker)?, Arc::clone(&store), opts, None);
            let http = match layer(metrics_listen, &file.metrics_listen) {
                Some(addr) => {
                    let s = connector::serve_metrics(resolve_addr(&addr)?, handle.metrics_source()).map_err(runtime)?;
                    log::info!("metrics on http://{}/metrics", s.local_addr());
                    Some(s)
                }
                None => None,
            };
            park(run_for);
            drop(http);
            let m = handle.stop();
            store.flush().map_err(runtime)?;
            stdout_write(&m.to_text())?;
            if !m.conserved() {
                return Err(CliError::Integrity("received != accepted + rejected".into()));
            }
            Ok(())
        }
        ConnectorCmd::Metrics { from, format } => {
            let from = layer(from, &file.metrics_listen).unwrap_or_else(|| DEFAULT_METRICS.to_string());
            let pairs = connector::fetch_metrics(resolve_addr(&from)?).map_err(runtime)?;
            let mut text = String::new();
            if format == MetricsFormat::Csv {
                text.push_str("name,value\n");
            }
            for (k, v) in pairs {
                let sep = if format == MetricsFormat::Csv { ',' } else { ' ' };
                text.push_str(&format!("{k}{sep}{v}\n"));
            }
            stdout_write(&text)
        }
        ConnectorCmd::Replay { store, rate, duration_s, sensors } => {
            if !(rate > 0.0) || sensors == 0 {
                return Err(usage("--rate and --sensors must be positive"));
            }
            let root = require_store(store, file)?;
            let store = Arc::new(Store::open(&root, StoreOptions::default()).map_err(runtime)?);
            let before = store.record_count();
            let ing = Ingestor::start(Arc::clone(&store), BatchPolicy::default(), None);
            let cfg = ReplayConfig { rate_per_s: rate, duration_s, sensors, ..Default::default() };
            let began = Instant::now();
            let report = connector::replay(&ing, &cfg);
            let m = ing.finish();
            let summary = serde_json::json!({
                "generated": report.generated,
                "received": m.received,
                "accepted": m.accepted,
                "rejected": m.rejected_total(),
                "conserved": m.conserved(),
                "stored_new": store.record_count() - before,
                "wall_s": began.elapsed().as_secs_f64(),
            });
            stdout_write(&format!("{}\n", serde_json::to_string_pretty(&summary).map_err(runtime)?))?;
            if !m.conserved() {
                return Err(CliError::Integrity("received != accepted + rejected".into()));
            }
            Ok(())
        }
    }
}

fn store_cmd(cmd: StoreCmd, file: &ConfigFile) -> CmdResult {
    match cmd {
        StoreCmd::Query(q) => store_query(q, file),
        StoreCmd::Check { store } => {
            let root = require_store(store, file)?;
            let report = check_segments(&root).map_err(runtime)?;
            let mut text = format!("segments {}\nrecords {}\nviolations {}\n", report.segments, report.records, report.violations.len());
            for v in &report.violations {
                text.push_str(&format!("  {v}\n"));
            }
            stdout_write(&text)?;
            if report.is_clean() {
                Ok(())
            } else {
                Err(CliError::Integrity(format!("{} violations", report.violations.len())))
            }
        }
    }
}

fn rfc3339(ts_us: i64) -> String {
    DateTime::<Utc>::from_timestamp_micros(ts_us)
        .map(|t| t.to_rfc3339_opts(SecondsFormat::Micros, true))
        .unwrap_or_else(|| ts_us.to_string())
}

fn store_query(q: QueryArgs, file: &ConfigFile) -> CmdResult {
    let root = require_store(q.store, file)?;
    if !root.is_dir() {
        return Err(usage(format!("store root {} does not exist", root.display())));
    }
    let store = Store::open(&root, StoreOptions::default()).map_err(runtime)?;
    let (t0, t1) = (q.from.timestamp_micros(), q.to.timestamp_micros());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["ts", "value"]).map_err(runtime)?;
    match (q.bucket, q.agg) {
        (Some(bucket), Some(agg)) => {
            let agg: Aggregation = agg.parse().map_err(usage)?;
            let bucket = i64::try_from(bucket.as_micros()).map_err(usage)?;
            for (ts, v) in store.downsample(&q.sensor, t0, t1, bucket, agg).map_err(usage)? {
                w.write_record([rfc3339(ts), v.to_string()]).map_err(runtime)?;
            }
        }
        _ => {
            for s in store.query_range(&q.sensor, t0, t1).map_err(usage)? {
                w.write_record([rfc3339(s.ts), s.v.to_string()]).map_err(runtime)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(runtime)?;
    stdout_write(&String::from_utf8_lossy(&bytes))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn etl_error(e: etl::EtlError) -> CliError {
    if e.is_integrity() {
        CliError::Integrity(e.to_string())
    } else {
        CliError::Runtime(e.to_string())
    }
}

fn etl_cmd(cmd: EtlCmd) -> CmdResult {
    match cmd {
        EtlCmd::Process { input, kind, out } => {
            let kind = match kind.as_str() {
                "auto" => None,
                k => Some(k.parse::<SensorKind>().map_err(usage)?),
            };
            if !input.is_dir() {
                return Err(usage(format!("--in {} is not a directory", input.display())));
            }
            let files = etl::process_dir(&input, kind).map_err(etl_error)?;
            std::fs::create_dir_all(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            let metas: Vec<_> = files.iter().map(|f| f.meta.clone()).collect();
            let info = etl::build_file_info(&metas);
            let mut by_kind: BTreeMap<SensorKind, Vec<etl::DataRow>> = BTreeMap::new();
            let mut laser = Vec::new();
            for f in &files {
                for w in &f.warnings {
                    log::warn!("{w}");
                }
                if f.kind.is_laser() {
                    laser.extend(f.laser.iter().cloned());
                } else {
                    by_kind.entry(f.kind).or_default().extend(f.rows.iter().cloned());
                }
            }
            let mut info_csv = None;
            for (k, rows) in &by_kind {
                let (data, fi) = etl::emit_normalized(rows, &info).map_err(etl_error)?;
                write_file(&out.join(format!("{}_data.csv", k.slug().replace('-', "_"))), &data)?;
                info_csv = Some(fi);
            }
            if !laser.is_empty() {
                write_file(&out.join("laser_data.csv"), &etl::emit_laser(&laser, &info).map_err(etl_error)?)?;
            }
            let info_csv = match info_csv {
                Some(c) => c,
                None => etl::emit_normalized(&[], &info).map_err(etl_error)?.1,
            };
            write_file(&out.join("file_info.csv"), &info_csv)?;
            log::info!("{} files, {} kinds, {} laser rows -> {}", files.len(), by_kind.len(), laser.len(), out.display());
            Ok(())
        }
        EtlCmd::Join { data, fileinfo, out } => {
            let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| runtime(format!("{}: {e}", p.display())));
            let joined = etl::join_by_filename_id(&read(&data)?, &read(&fileinfo)?).map_err(etl_error)?;
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
            let header = format!("{},{}", etl::FILE_INFO_HEADER, etl::DATA_HEADER);
            w.write_record(header.split(',')).map_err(runtime)?;
            for r in &joined {
                w.write_record(r.canonical()).map_err(runtime)?;
            }
            write_file(&out, &String::from_utf8_lossy(&w.into_inner().map_err(runtime)?))
        }
    }
}

fn dsp_cmd(cmd: DspCmd) -> CmdResult {
    let DspCmd::Inspect { input, window, order } = cmd;
    let mut r = csv::Reader::from_path(&input).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    let (mut t, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(runtime)?;
        let num = |j: usize| -> Result<f64, CliError> {
            rec.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| usage(format!("{}: row {} needs numeric t,y", input.display(), i + 2)))
        };
        t.push(num(0)?);
        y.push(num(1)?);
    }
    let smoothed = savgol_filter(&y, window, order).map_err(|e: DspError| usage(e))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "y", "y_smoothed"]).map_err(runtime)?;
    for i in 0..t.len() {
        w.write_record([t[i].to_string(), y[i].to_string(), smoothed[i].to_string()]).map_err(runtime)?;
    }
    stdout_write(&String::from_utf8_lossy(&w.into_inner().map_err(runtime)?))
}

fn e2e_cmd(cmd: E2eCmd, file: &ConfigFile) -> CmdResult {
    let E2eCmd::Run { broker, store, scenario, duration, speedup, metrics_port, format } = cmd;
    let store_root = layer(store, &file.store).unwrap_or_else(|| {
        std::env::temp_dir().join(format!("paveflow-e2e-{}-{}", std::process::id(), crate::now_us()))
    });
    let config = PipelineConfig {
        broker,
        store_root,
        scenario: layer(scenario, &file.scenario),
        duration_s: duration,
        speedup: layer(speedup, &file.speedup).unwrap_or(10.0),
        metrics_port,
    };
    if let Err(e) = config.validate() {
        return Err(usage(e));
    }
    let (report, failure) = match run_e2e(&config) {
        Ok(r) => (r, None),
        Err(partial) => {
            let msg = partial.error.clone().unwrap_or_default();
            (*partial, Some(runtime(msg)))
        }
    };
    let text = match format {
        ReportFormat::Json => format!("{}\n", report.to_json()),
        ReportFormat::Text => report.to_text(),
    };
    stdout_write(&text)?;
    if let Some(f) = failure {
        return Err(f);
    }
    if report.stored != report.published - report.rejected.min(report.published) {
        return Err(CliError::Integrity(format!(
            "stored {} != published {} - rejected {}",
            report.stored, report.published, report.rejected
        )));
    }
    Ok(())
}
