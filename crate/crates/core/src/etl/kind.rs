use std::fmt;
use std::str::FromStr;

use super::EtlError;
use crate::dsp::DspConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SensorKind {
    Asg,
    Csg,
    Pc,
    Tc,
    Laser,
    LaserPretraffic,
    StationaryEt,
    StationaryMt,
    Fwd,
}

impl SensorKind {
    pub const ALL: [SensorKind; 9] = [
        SensorKind::Asg,
        SensorKind::Csg,
        SensorKind::Pc,
        SensorKind::Tc,
        SensorKind::Laser,
        SensorKind::LaserPretraffic,
        SensorKind::StationaryEt,
        SensorKind::StationaryMt,
        SensorKind::Fwd,
    ];

    /// Name used in raw headers and in `sensor_type` when the filename
    /// carries none.
    pub fn name(&self) -> &'static str {
        match self {
            SensorKind::Asg => "ASG",
            SensorKind::Csg => "CSG",
            SensorKind::Pc => "PC",
            SensorKind::Tc => "TC",
            SensorKind::Laser => "LASER",
            SensorKind::LaserPretraffic => "LASER_PRETRAFFIC",
            SensorKind::StationaryEt => "STATIONARY_ET",
            SensorKind::StationaryMt => "STATIONARY_MT",
            SensorKind::Fwd => "FWD",
        }
    }

    /// Short form used on the command line and in output file names.
    pub fn slug(&self) -> &'static str {
        match self {
            SensorKind::Asg => "asg",
            SensorKind::Csg => "csg",
            SensorKind::Pc => "pc",
            SensorKind::Tc => "tc",
            SensorKind::Laser => "laser",
            SensorKind::LaserPretraffic => "laser-pre",
            SensorKind::StationaryEt => "stationary-et",
            SensorKind::StationaryMt => "stationary-mt",
            SensorKind::Fwd => "fwd",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            SensorKind::Asg | SensorKind::StationaryEt | SensorKind::StationaryMt | SensorKind::Fwd => "microstrain",
            SensorKind::Csg => "in",
            SensorKind::Pc => "kPa",
            SensorKind::Tc => "degF",
            SensorKind::Laser | SensorKind::LaserPretraffic => "mm",
        }
    }

    pub fn is_laser(&self) -> bool {
        matches!(self, SensorKind::Laser | SensorKind::LaserPretraffic)
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self, SensorKind::StationaryEt | SensorKind::StationaryMt)
    }

    pub fn default_dsp(&self) -> DspConfig {
        let window = match self {
            SensorKind::Pc | SensorKind::Fwd => 101,
            SensorKind::Tc => 51,
            _ => 1001,
        };
        DspConfig::with_window(window)
    }

    /// Best guess from a filename's sensor-type field.
    pub fn from_sensor_type(s: &str) -> Option<SensorKind> {
        let s = s.to_ascii_uppercase();
        if s.contains("CONCRETE") {
            Some(SensorKind::Csg)
        } else if s.contains("STRAIN") {
            Some(SensorKind::Asg)
        } else if s.contains("PRESSURE") {
            Some(SensorKind::Pc)
        } else if s.contains("THERMO") {
            Some(SensorKind::Tc)
        } else if s.contains("LASER") {
            Some(SensorKind::Laser)
        } else if s.contains("FWD") {
            Some(SensorKind::Fwd)
        } else {
            s.parse().ok()
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorKind {
    type Err = EtlError;

    /// Accepts either the header name or the slug, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        let norm = if norm == "LASER_PRE" { "LASER_PRETRAFFIC".to_string() } else { norm };
        SensorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| EtlError::UnknownKind(s.to_string()))
    }
}
