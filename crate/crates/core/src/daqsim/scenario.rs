use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::DaqError;
use crate::wire::Subject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensorKind {
    /// Earth pressure cell.
    Epc,
    /// Soil compression gauge.
    Scg,
    Moisture,
    Temperature,
}

impl SensorKind {
    pub fn default_unit(&self) -> &'static str {
        match self {
            SensorKind::Epc => "kPa",
            SensorKind::Scg => "mm",
            SensorKind::Moisture => "m3/m3",
            SensorKind::Temperature => "degF",
        }
    }
}

/// Shape parameters. Which fields matter depends on the sensor kind:
/// EPC/SCG use `baseline`, `amplitude`, `period_s`, `width_s`;
/// TEMPERATURE uses `mean` and `diurnal_amplitude`;
/// MOISTURE uses `baseline` and `drift_per_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalParams {
    pub baseline: f64,
    pub amplitude: f64,
    pub period_s: f64,
    pub width_s: f64,
    pub mean: f64,
    pub diurnal_amplitude: f64,
    pub drift_per_s: f64,
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams {
            baseline: 0.0,
            amplitude: 1.0,
            period_s: 10.0,
            width_s: 0.5,
            mean: 70.0,
            diurnal_amplitude: 10.0,
            drift_per_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub id: String,
    pub kind: SensorKind,
    #[serde(default)]
    pub unit: String,
    #[serde(default = "default_rate")]
    pub rate_hz: u32,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub signal: SignalParams,
}

fn default_rate() -> u32 {
    100
}

const DAY_S: f64 = 86_400.0;

impl SensorSpec {
    pub fn new(id: impl Into<String>, kind: SensorKind) -> Self {
        SensorSpec {
            id: id.into(),
            kind,
            unit: kind.default_unit().to_string(),
            rate_hz: default_rate(),
            noise_sigma: 0.0,
            signal: SignalParams::default(),
        }
    }

    /// Noise-free signal at `t` seconds after scenario start.
    pub fn signal_at(&self, t: f64) -> f64 {
        let p = &self.signal;
        match self.kind {
            SensorKind::Epc | SensorKind::Scg => {
                // one Gaussian load pulse per period, peaking mid-period
                let phase = t.rem_euclid(p.period_s) - p.period_s / 2.0;
                p.baseline + p.amplitude * (-(phase * phase) / (2.0 * p.width_s * p.width_s)).exp()
            }
            SensorKind::Temperature => p.mean + p.diurnal_amplitude * (2.0 * PI * t / DAY_S).sin(),
            SensorKind::Moisture => p.baseline + p.drift_per_s * t,
        }
    }

    fn validate(&self) -> Result<(), DaqError> {
        let bad = |why: &str| Err(DaqError::InvalidScenario(format!("sensor '{}': {why}", self.id)));
        if Subject::concrete(&self.id).map(|s| s.len() != 1).unwrap_or(true) {
            return bad("id must be a single subject token");
        }
        if self.rate_hz < 1 {
            return bad("rate_hz must be at least 1");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise_sigma must be finite and non-negative");
        }
        if matches!(self.kind, SensorKind::Epc | SensorKind::Scg)
            && (!(self.signal.period_s > 0.0) || !(self.signal.width_s > 0.0))
        {
            return bad("pulse period and width must be positive");
        }
        if self.unit.is_empty() {
            return bad("unit must not be empty");
        }
        Ok(())
    }
}

/// Scenario file (JSON):
///
/// ```json
/// {
///   "site": "65", "daq": "1", "seed": 42,
///   "start": "2024-06-01T00:00:00Z", "duration_s": 60,
///   "sensors": [
///     {"id": "epc3", "kind": "EPC", "unit": "kPa", "rate_hz": 100, "noise_sigma": 0.2,
///      "signal": {"baseline": 40.0, "amplitude": 25.0, "period_s": 10.0, "width_s": 0.5}}
///   ]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub site: String,
    pub daq: String,
    #[serde(default)]
    pub seed: u64,
    pub start: DateTime<Utc>,
    pub duration_s: u64,
    #[serde(default)]
    pub sensors: Vec<SensorSpec>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, DaqError> {
        let text = std::fs::read_to_string(path)?;
        let mut scenario: Scenario = serde_json::from_str(&text)?;
        for s in &mut scenario.sensors {
            if s.unit.is_empty() {
                s.unit = s.kind.default_unit().to_string();
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }

    /// Three sensors (EPC, SCG, TEMPERATURE) at site 65, DAQ 1, for 60 s.
    pub fn example() -> Self {
        let mut epc = SensorSpec::new("epc3", SensorKind::Epc);
        epc.signal = SignalParams { baseline: 40.0, amplitude: 25.0, ..Default::default() };
        epc.noise_sigma = 0.2;
        let mut scg = SensorSpec::new("scg1", SensorKind::Scg);
        scg.signal = SignalParams { baseline: 1.5, amplitude: 0.3, period_s: 12.0, ..Default::default() };
        scg.noise_sigma = 0.01;
        let mut tc = SensorSpec::new("tc1", SensorKind::Temperature);
        tc.noise_sigma = 0.05;
        Scenario {
            site: "65".into(),
            daq: "1".into(),
            seed: 42,
            start: DateTime::parse_from_rfc3339("2024-06-01T00:00:00Z").unwrap().with_timezone(&Utc),
            duration_s: 60,
            sensors: vec![epc, scg, tc],
        }
    }

    pub fn start_us(&self) -> i64 {
        self.start.timestamp_micros()
    }

    pub fn topic_for(&self, sensor_id: &str) -> String {
        format!("site/{}/daq/{}/sensor/{}", self.site, self.daq, sensor_id)
    }

    pub fn validate(&self) -> Result<(), DaqError> {
        for (what, token) in [("site", &self.site), ("daq", &self.daq)] {
            if Subject::concrete(token).map(|s| s.len() != 1).unwrap_or(true) {
                return Err(DaqError::InvalidScenario(format!("{what} '{token}' must be a single subject token")));
            }
        }
        if self.start_us() <= 0 {
            return Err(DaqError::InvalidScenario("start must be after the Unix epoch".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &self.sensors {
            s.validate()?;
            if !seen.insert(&s.id) {
                return Err(DaqError::InvalidScenario(format!("duplicate sensor id '{}'", s.id)));
            }
        }
        Ok(())
    }
}
