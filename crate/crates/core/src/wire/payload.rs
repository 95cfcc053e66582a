use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::WireError;

/// One averaged sensor reading as carried in PUB/MSG payloads.
///
/// Encoded as UTF-8 JSON with exactly the fields `ts`, `v`, `seq` and `unit`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePayload {
    /// Microseconds since the Unix epoch, UTC.
    pub ts: i64,
    pub v: f64,
    pub seq: u64,
    pub unit: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayload {
    ts: i64,
    v: Value,
    seq: u64,
    unit: String,
}

impl SamplePayload {
    pub fn to_json(&self) -> Vec<u8> {
        // serde_json writes non-finite floats as null, which decode reports as NonFinite
        serde_json::to_vec(self).expect("payload serialization cannot fail")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, WireError> {
        let raw: RawPayload = serde_json::from_slice(bytes)
            .map_err(|e| WireError::MalformedPayload(e.to_string()))?;
        if raw.ts <= 0 {
            return Err(WireError::MalformedPayload(format!("ts must be positive, got {}", raw.ts)));
        }
        let v = match &raw.v {
            Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| WireError::MalformedPayload("v is not representable".into()))?,
            Value::Null => return Err(WireError::NonFiniteValue),
            Value::String(s) => match s.to_ascii_lowercase().as_str() {
                "nan" | "inf" | "-inf" | "infinity" | "-infinity" | "+infinity" => {
                    return Err(WireError::NonFiniteValue)
                }
                _ => return Err(WireError::MalformedPayload("v must be a number".into())),
            },
            _ => return Err(WireError::MalformedPayload("v must be a number".into())),
        };
        if !v.is_finite() {
            return Err(WireError::NonFiniteValue);
        }
        Ok(SamplePayload { ts: raw.ts, v, seq: raw.seq, unit: raw.unit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = SamplePayload { ts: 1_700_000_000_000_000, v: 12.5, seq: 9, unit: "kPa".into() };
        let bytes = p.to_json();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"ts":1700000000000000,"v":12.5,"seq":9,"unit":"kPa"}"#
        );
        assert_eq!(SamplePayload::from_json(&bytes).unwrap(), p);
    }

    #[test]
    fn strict_fields() {
        assert!(matches!(SamplePayload::from_json(b"{}"), Err(WireError::MalformedPayload(_))));
        let extra = br#"{"ts":1,"v":1.0,"seq":1,"unit":"mm","x":1}"#;
        assert!(matches!(SamplePayload::from_json(extra), Err(WireError::MalformedPayload(_))));
        let float_ts = br#"{"ts":1.5,"v":1.0,"seq":1,"unit":"mm"}"#;
        assert!(SamplePayload::from_json(float_ts).is_err());
        let zero_ts = br#"{"ts":0,"v":1.0,"seq":1,"unit":"mm"}"#;
        assert!(SamplePayload::from_json(zero_ts).is_err());
        let int_v = br#"{"ts":5,"v":3,"seq":1,"unit":"mm"}"#;
        assert_eq!(SamplePayload::from_json(int_v).unwrap().v, 3.0);
    }

    #[test]
    fn non_finite() {
        let nan = SamplePayload { ts: 1, v: f64::NAN, seq: 1, unit: "kPa".into() };
        assert!(matches!(SamplePayload::from_json(&nan.to_json()), Err(WireError::NonFiniteValue)));
        let s = br#"{"ts":1,"v":"NaN","seq":1,"unit":"kPa"}"#;
        assert!(matches!(SamplePayload::from_json(s), Err(WireError::NonFiniteValue)));
    }
}
