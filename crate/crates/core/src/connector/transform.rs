use std::fmt;

use crate::tsstore::Sample;
use crate::wire::{SamplePayload, Subject, WireError};

/// A payload ready for the store.
#[derive(Debug, Clone, PartialEq)]
pub struct StoreRecord {
    pub sensor: String,
    pub ts: i64,
    pub v: f64,
    pub seq: u64,
    pub received_us: i64,
}

impl StoreRecord {
    pub fn sample(&self) -> Sample {
        Sample { sensor: self.sensor.clone(), ts: self.ts, v: self.v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RejectReason {
    Malformed,
    NonFinite,
    BadSubject,
    Store,
    Overflow,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::Malformed,
        RejectReason::NonFinite,
        RejectReason::BadSubject,
        RejectReason::Store,
        RejectReason::Overflow,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::Malformed => "malformed",
            RejectReason::NonFinite => "non_finite",
            RejectReason::BadSubject => "bad_subject",
            RejectReason::Store => "store",
            RejectReason::Overflow => "overflow",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub reason: RejectReason,
    pub detail: String,
}

/// `site.<site>.daq.<daq>.sensor.<id>` becomes `<site>/<daq>/<id>`.
pub fn sensor_key(subject: &Subject) -> Result<String, Reject> {
    let t = subject.tokens();
    let shaped = t.len() == 6 && t[0] == "site" && t[2] == "daq" && t[4] == "sensor";
    if !shaped || subject.is_pattern() {
        return Err(Reject {
            reason: RejectReason::BadSubject,
            detail: format!("'{subject}' is not site.<site>.daq.<daq>.sensor.<id>"),
        });
    }
    Ok(format!("{}/{}/{}", t[1], t[3], t[5]))
}

pub fn transform_at(subject: &Subject, payload: &[u8], received_us: i64) -> Result<StoreRecord, Reject> {
    let sensor = sensor_key(subject)?;
    let p = SamplePayload::from_json(payload).map_err(|e| Reject {
        reason: match e {
            WireError::NonFiniteValue => RejectReason::NonFinite,
            _ => RejectReason::Malformed,
        },
        detail: e.to_string(),
    })?;
    Ok(StoreRecord { sensor, ts: p.ts, v: p.v, seq: p.seq, received_us })
}

/// Strictly parses a payload and derives the store key from its subject.
pub fn transform(subject: &Subject, payload: &[u8]) -> Result<StoreRecord, Reject> {
    transform_at(subject, payload, crate::now_us())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subj(s: &str) -> Subject {
        Subject::concrete(s).unwrap()
    }

    #[test]
    fn field_mapping() {
        let payload = br#"{"ts":1700000000000000,"v":12.5,"seq":9,"unit":"kPa"}"#;
        let r = transform_at(&subj("site.65.daq.1.sensor.epc3"), payload, 7).unwrap();
        assert_eq!(
            r,
            StoreRecord { sensor: "65/1/epc3".into(), ts: 1_700_000_000_000_000, v: 12.5, seq: 9, received_us: 7 }
        );
    }

    #[test]
    fn rejects() {
        let s = subj("site.65.daq.1.sensor.epc3");
        assert_eq!(transform(&s, b"{}").unwrap_err().reason, RejectReason::Malformed);
        let nan = br#"{"ts":1,"v":null,"seq":1,"unit":"kPa"}"#;
        assert_eq!(transform(&s, nan).unwrap_err().reason, RejectReason::NonFinite);
        let ok = br#"{"ts":1,"v":1.0,"seq":1,"unit":"kPa"}"#;
        for bad in ["site.65.daq.1", "site.65.daq.1.sensor.epc3.x", "site.65.box.1.sensor.epc3"] {
            assert_eq!(transform(&subj(bad), ok).unwrap_err().reason, RejectReason::BadSubject, "{bad}");
        }
    }
}
