//! Pavement sensor data management.
//!
//! Live path: [`daqsim`] publishes one-second averages through the [`broker`]
//! using the [`wire`] protocol; the [`connector`] subscribes with a wildcard and
//! writes into the partitioned [`tsstore`].
//!
//! Static path: [`etl`] parses raw gauge logs, runs the [`dsp`] chain
//! (smoothing, extrema, pass selection, envelope, calibration) and emits
//! normalized CSV tables keyed by `filename_id`.

pub mod broker;
pub mod wire;
pub mod tsstore;
pub mod dsp;
pub mod daqsim;
pub mod connector;
pub mod etl;
pub mod cli;

/// Wall clock in microseconds since the Unix epoch.
pub fn now_us() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as i64)
        .unwrap_or(0)
}
