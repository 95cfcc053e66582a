use super::DspError;

/// Per-gauge calibration: a dimensionless gain and the full-scale magnitude,
/// both in units of 10⁻⁶.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSpec {
    pub cal_coeff: f64,
    pub rated_output: f64,
}

impl CalibrationSpec {
    pub fn new(cal_coeff: f64, rated_output: f64) -> Result<Self, DspError> {
        if !(rated_output > 0.0) || !cal_coeff.is_finite() || !rated_output.is_finite() {
            return Err(DspError::InvalidCalibration { cal_coeff, rated_output });
        }
        Ok(CalibrationSpec { cal_coeff, rated_output })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrated {
    pub value: f64,
    /// Set when the magnitude exceeds the rated output.
    pub out_of_range: bool,
}

pub fn calibrate(raw: f64, spec: &CalibrationSpec) -> Calibrated {
    let value = raw * spec.cal_coeff;
    Calibrated { value, out_of_range: value.abs() > spec.rated_output }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_and_range() {
        let unit = CalibrationSpec::new(1.0, 5890.0).unwrap();
        assert_eq!(calibrate(123.0, &unit), Calibrated { value: 123.0, out_of_range: false });
        assert_eq!(calibrate(-5890.0, &unit), Calibrated { value: -5890.0, out_of_range: false });
        let half = CalibrationSpec::new(0.5, 5890.0).unwrap();
        assert_eq!(calibrate(2.0, &half), Calibrated { value: 1.0, out_of_range: false });
        assert_eq!(calibrate(10_000.0, &unit), Calibrated { value: 10_000.0, out_of_range: true });
        assert!(CalibrationSpec::new(1.0, 0.0).is_err());
        assert!(CalibrationSpec::new(1.0, -3.0).is_err());
    }
}
