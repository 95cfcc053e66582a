//! Static-path signal processing: Savitzky-Golay smoothing, extrema
//! detection, first/last pass selection, elastic-recovery envelope sampling
//! and gauge calibration. Everything here is a pure function of its inputs.

mod calibrate;
mod envelope;
mod extrema;
mod passes;
mod savgol;

use thiserror::Error;

pub use calibrate::{calibrate, Calibrated, CalibrationSpec};
pub use envelope::{
    envelope_fractions, extract_envelope, sample_at, Envelope, EnvelopePoint, DEFAULT_ENVELOPE_FRACTIONS,
};
pub use extrema::{detect_extrema, find_peaks, local_maxima, prominences, Extremum, ExtremumKind, PassLabel};
pub use passes::{select_passes, FIRST_PASSES, LAST_PASSES};
pub use savgol::{savgol_filter, savgol_weights, savgol_weights_at, smooth};

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("window must be odd and positive, got {0}")]
    InvalidWindow(usize),
    #[error("polynomial order {polyorder} must be below window {window}")]
    InvalidOrder { window: usize, polyorder: usize },
    #[error("series of {len} samples is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid calibration (coeff {cal_coeff}, rated output {rated_output})")]
    InvalidCalibration { cal_coeff: f64, rated_output: f64 },
}

/// A sampled signal: seconds elapsed and values in `unit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub unit: String,
}

impl Series {
    pub fn new(t: Vec<f64>, y: Vec<f64>, unit: impl Into<String>) -> Result<Self, DspError> {
        if t.len() != y.len() {
            return Err(DspError::InvalidSeries(format!("{} times vs {} values", t.len(), y.len())));
        }
        if let Some(i) = t.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(DspError::InvalidSeries(format!("time not strictly increasing at sample {}", i + 1)));
        }
        if let Some(i) = t.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(DspError::InvalidSeries(format!("non-finite entry at position {i}")));
        }
        Ok(Series { t, y, unit: unit.into() })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Scales every value by `k`.
    pub fn scaled(&self, k: f64) -> Series {
        Series { t: self.t.clone(), y: self.y.iter().map(|v| v * k).collect(), unit: self.unit.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    /// Savitzky-Golay window in samples; odd.
    pub window: usize,
    pub polyorder: usize,
    /// Minimum time between two kept extrema of the same kind, seconds.
    pub min_separation_s: f64,
    /// Minimum prominence as a fraction of the signal's peak-to-peak range.
    pub prominence_fraction: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        DspConfig { window: 1001, polyorder: 2, min_separation_s: 5.0, prominence_fraction: 0.2 }
    }
}

impl DspConfig {
    pub fn with_window(window: usize) -> Self {
        DspConfig { window, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(DspError::InvalidWindow(self.window));
        }
        if self.polyorder < 1 || self.polyorder >= self.window {
            return Err(DspError::InvalidOrder { window: self.window, polyorder: self.polyorder });
        }
        if !(self.min_separation_s >= 0.0) {
            return Err(DspError::InvalidConfig("min separation must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.prominence_fraction) {
            return Err(DspError::InvalidConfig("prominence fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn smooth(&self, series: &Series) -> Result<Series, DspError> {
        self.validate()?;
        smooth(series, self.window, self.polyorder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_validation() {
        assert!(Series::new(vec![0.0, 1.0], vec![1.0], "x").is_err());
        assert!(Series::new(vec![0.0, 0.0], vec![1.0, 2.0], "x").is_err());
        assert!(Series::new(vec![0.0, 1.0], vec![1.0, f64::NAN], "x").is_err());
        assert!(Series::new(vec![0.0, 1.0], vec![1.0, 2.0], "x").is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(DspConfig::default().validate().is_ok());
        assert!(DspConfig::with_window(1000).validate().is_err());
        assert!(DspConfig { polyorder: 0, ..Default::default() }.validate().is_err());
        assert!(DspConfig { prominence_fraction: 1.5, ..Default::default() }.validate().is_err());
    }
}
