//! The `paveflow` command line.
//!
//! Settings resolve as flag, then `PAVEH_*` environment variable, then the
//! TOML file named by `--config` / `PAVEH_CONFIG`, then the built-in
//! default. Logs go to stderr; data (CSV, JSON, metrics) goes to stdout.
//! Exit codes: 0 ok, 2 usage, 3 runtime failure, 4 data integrity.

mod commands;
mod config;
mod e2e;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ConfigFile;
pub use e2e::{run_e2e, E2EReport, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Integrity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Integrity(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) | CliError::Integrity(m) => f.write_str(m),
        }
    }
}

fn parse_duration(s: &str) -> Result<Duration, String> {
    humantime::parse_duration(s).map_err(|e| e.to_string())
}

fn parse_time(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc)).map_err(|e| format!("{s}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "paveflow", version, about = "Pavement sensor telemetry and static ETL", subcommand_required = true, arg_required_else_help = true)]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "PAVEH_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Subject broker.
    #[command(subcommand)]
    Broker(BrokerCmd),
    /// Roadside DAQ simulator.
    #[command(subcommand)]
    Daqsim(DaqsimCmd),
    /// Broker-to-store connector.
    #[command(subcommand)]
    Connector(ConnectorCmd),
    /// Time-series store queries and checks.
    #[command(subcommand)]
    Store(StoreCmd),
    /// Static-path ETL.
    #[command(subcommand)]
    Etl(EtlCmd),
    /// Signal processing utilities.
    #[command(subcommand)]
    Dsp(DspCmd),
    /// Full local pipeline.
    #[command(subcommand)]
    E2e(E2eCmd),
}

#[derive(Debug, Subcommand)]
pub enum BrokerCmd {
    /// Accept sessions and route messages.
    Serve {
        #[arg(long, env = "PAVEH_LISTEN")]
        listen: Option<String>,
        #[arg(long)]
        max_payload: Option<usize>,
        /// Outbound frames buffered per session.
        #[arg(long)]
        queue: Option<usize>,
        #[arg(long, value_parser = parse_duration)]
        keepalive: Option<Duration>,
        /// Stop after this long instead of running until killed.
        #[arg(long = "for", value_parser = parse_duration)]
        run_for: Option<Duration>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DaqsimCmd {
    /// Publish one-second averages for a scenario.
    Run {
        #[arg(long, env = "PAVEH_BROKER")]
        broker: Option<String>,
        /// Scenario JSON; the built-in three-sensor scenario when absent.
        #[arg(long, env = "PAVEH_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        site: Option<String>,
        #[arg(long)]
        daq: Option<String>,
        #[arg(long, env = "PAVEH_SPEEDUP")]
        speedup: Option<f64>,
        /// Simulated seconds, overriding the scenario.
        #[arg(long)]
        duration: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConnectorCmd {
    /// Subscribe and write sensor messages into a store.
    Run {
        #[arg(long, env = "PAVEH_BROKER")]
        broker: Option<String>,
        #[arg(long, env = "PAVEH_STORE")]
        store: Option<PathBuf>,
        #[arg(long, env = "PAVEH_SUBJECT")]
        subject: Option<String>,
        /// Serve `GET /metrics` here.
        #[arg(long, env = "PAVEH_METRICS_LISTEN")]
        metrics_listen: Option<String>,
        #[arg(long = "for", value_parser = parse_duration)]
        run_for: Option<Duration>,
    },
    /// Fetch metrics from a running connector.
    Metrics {
        #[arg(long, env = "PAVEH_METRICS_LISTEN")]
        from: Option<String>,
        #[arg(long, value_enum, default_value_t = MetricsFormat::Csv)]
        format: MetricsFormat,
    },
    /// Feed time-compressed synthetic traffic straight into a store.
    Replay {
        #[arg(long, env = "PAVEH_STORE")]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = 23.15)]
        rate: f64,
        #[arg(long, default_value_t = 86_400)]
        duration_s: u64,
        #[arg(long, default_value_t = 24)]
        sensors: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricsFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum StoreCmd {
    /// Print samples or bucket aggregates for one sensor as CSV.
    Query(QueryArgs),
    /// Verify every segment on disk.
    Check {
        #[arg(long, env = "PAVEH_STORE")]
        store: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, env = "PAVEH_STORE")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub sensor: String,
    #[arg(long, value_parser = parse_time)]
    pub from: DateTime<Utc>,
    #[arg(long, value_parser = parse_time)]
    pub to: DateTime<Utc>,
    #[arg(long, value_parser = parse_duration, requires = "agg")]
    pub bucket: Option<Duration>,
    #[arg(long, requires = "bucket")]
    pub agg: Option<String>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Subcommand)]
pub enum EtlCmd {
    /// Turn a directory of raw logs into FILE_INFO and data tables.
    Process {
        #[arg(long = "in")]
        input: PathBuf,
        /// auto, asg, csg, pc, tc, laser, laser-pre, stationary-et, stationary-mt or fwd.
        #[arg(long, default_value = "auto")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join a data table back to FILE_INFO by filename_id.
    Join {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        fileinfo: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum DspCmd {
    /// Smooth a `t,y` CSV and print `t,y,y_smoothed`.
    Inspect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1001)]
        window: usize,
        #[arg(long, default_value_t = 2)]
        order: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum E2eCmd {
    /// Run broker, simulator and connector together and report.
    Run {
        /// Broker listen address; a free loopback port when absent.
        #[arg(long, env = "PAVEH_LISTEN")]
        broker: Option<SocketAddr>,
        /// Store root; a fresh temporary directory when absent.
        #[arg(long, env = "PAVEH_STORE")]
        store: Option<PathBuf>,
        #[arg(long, env = "PAVEH_SCENARIO")]
        scenario: Option<PathBuf>,
        #[arg(long)]
        duration: Option<u64>,
        #[arg(long, env = "PAVEH_SPEEDUP")]
        speedup: Option<f64>,
        #[arg(long)]
        metrics_port: Option<u16>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
}

/// Parses and validates a command line (including the program name).
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    if let Command::Store(StoreCmd::Query(q)) = &cli.command {
        if q.from > q.to {
            return Err(clap::Error::raw(
                clap::error::ErrorKind::ValueValidation,
                format!("--from {} is after --to {}\n", q.from, q.to),
            ));
        }
    }
    Ok(cli)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    match commands::dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_parses() {
        let cli = parse_args([
            "paveflow", "store", "query", "--from", "2020-01-01T00:00:00Z", "--to", "2020-01-02T00:00:00Z", "--sensor",
            "65/1/epc3",
        ])
        .unwrap();
        match cli.command {
            Command::Store(StoreCmd::Query(q)) => {
                assert_eq!(q.sensor, "65/1/epc3");
                assert_eq!((q.to - q.from).num_hours(), 24);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors() {
        let reversed = parse_args([
            "paveflow", "store", "query", "--from", "2020-01-02T00:00:00Z", "--to", "2020-01-01T00:00:00Z", "--sensor", "x",
        ]);
        assert!(reversed.unwrap_err().use_stderr());
        assert_eq!(run(["paveflow"]), 2);
        assert_eq!(run(["paveflow", "store", "query", "--bogus"]), 2);
        assert_eq!(run(["paveflow", "--help"]), 0);
    }
}
