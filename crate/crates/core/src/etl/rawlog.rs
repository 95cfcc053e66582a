use std::collections::BTreeMap;
use std::path::Path;

use super::{parse_filename, EtlError, SensorKind};
use crate::dsp::{CalibrationSpec, Series};

pub const LASER_COLUMNS: [&str; 2] = ["laser_reading_mm", "beam_location_mm"];

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub name: String,
    pub series: Series,
    pub gage: String,
    pub placement: String,
    /// Absent for laser channels.
    pub calibration: Option<CalibrationSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawLog {
    pub path: String,
    pub kind: SensorKind,
    /// `key -> value` from the `#` header.
    pub header: BTreeMap<String, String>,
    pub channels: Vec<Channel>,
    pub warnings: Vec<String>,
}

impl RawLog {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.get(key).map(String::as_str)
    }
}

pub fn parse_raw_log(path: &Path, kind: Option<SensorKind>) -> Result<RawLog, EtlError> {
    let text = std::fs::read_to_string(path).map_err(|source| EtlError::Io { path: path.to_path_buf(), source })?;
    parse_raw_str(&path.display().to_string(), &text, kind)
}

/// Parses raw text. `kind` overrides detection but must agree with a `kind`
/// header when both are present; otherwise the kind comes from the header,
/// then from the filename.
pub fn parse_raw_str(path: &str, text: &str, kind: Option<SensorKind>) -> Result<RawLog, EtlError> {
    let fail = |line: usize, why: String| EtlError::Format { path: path.to_string(), line, why };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let ends_cleanly = text.is_empty() || text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();

    let mut header: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut columns: Option<(usize, Vec<String>)> = None;
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = lines[i].trim();
        i += 1;
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .split_once(':')
                .ok_or_else(|| fail(lineno, "metadata line must be '# key: value'".into()))?;
            header.insert(k.trim().to_ascii_lowercase(), (lineno, v.trim().to_string()));
            continue;
        }
        let cols: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        if !cols[0].eq_ignore_ascii_case("seconds") || cols.len() < 2 {
            return Err(fail(lineno, "expected column header 'seconds,<channel>...'".into()));
        }
        columns = Some((lineno, cols));
        break;
    }
    let Some((header_line, cols)) = columns else {
        return Err(fail(lines.len() + 1, "missing column header".into()));
    };

    let kind = resolve_kind(path, kind, header.get("kind"))?;
    if let Some((line, unit)) = header.get("unit") {
        if unit != kind.unit() {
            return Err(fail(*line, format!("unit '{unit}' does not match {kind} ({})", kind.unit())));
        }
    }
    let names = &cols[1..];
    if kind.is_laser() && names != LASER_COLUMNS {
        return Err(fail(header_line, format!("laser columns must be seconds,{}", LASER_COLUMNS.join(","))));
    }

    let mut warnings = Vec::new();
    let mut t = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let data_start = i;
    for (j, raw) in lines[data_start..].iter().enumerate() {
        let lineno = data_start + j + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let is_last = data_start + j + 1 == lines.len();
        match parse_row(raw, cols.len()) {
            Ok(row) => {
                if let Some(&prev) = t.last() {
                    if !(row[0] > prev) {
                        return Err(fail(lineno, "seconds must be strictly increasing".into()));
                    }
                }
                t.push(row[0]);
                for (c, v) in values.iter_mut().zip(&row[1..]) {
                    c.push(*v);
                }
            }
            Err(why) if is_last && !ends_cleanly => {
                warnings.push(format!("{path}:{lineno}: truncated final row dropped ({why})"));
            }
            Err(why) => return Err(fail(lineno, why)),
        }
    }
    if t.is_empty() {
        return Err(fail(header_line + 1, "no data rows after column header".into()));
    }

    let per_channel = |key: &str| -> Result<Option<Vec<String>>, EtlError> {
        let Some((line, v)) = header.get(key) else { return Ok(None) };
        let items: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
        match items.len() {
            1 => Ok(Some(vec![items[0].clone(); names.len()])),
            n if n == names.len() => Ok(Some(items)),
            n => Err(fail(*line, format!("'{key}' has {n} entries for {} channels", names.len()))),
        }
    };
    let gages = per_channel("gage")?.unwrap_or_else(|| names.to_vec());
    let placements = per_channel("placement")?.unwrap_or_else(|| vec![String::new(); names.len()]);
    let calibrations = if kind.is_laser() {
        vec![None; names.len()]
    } else {
        let numbers = |key: &str| -> Result<Vec<f64>, EtlError> {
            let line = header.get(key).map_or(header_line, |(l, _)| *l);
            let items = per_channel(key)?.ok_or_else(|| fail(header_line, format!("missing '# {key}:' header")))?;
            items
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| fail(line, format!("'{key}' entry '{s}' is not a number"))))
                .collect()
        };
        let coeffs = numbers("cal_coeff")?;
        let rated = numbers("rated_output")?;
        let line = header.get("cal_coeff").map_or(header_line, |(l, _)| *l);
        coeffs
            .iter()
            .zip(&rated)
            .map(|(&c, &r)| CalibrationSpec::new(c, r).map(Some).map_err(|e| fail(line, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    };

    let unit = kind.unit();
    let mut channels = Vec::with_capacity(names.len());
    for (k, y) in values.into_iter().enumerate() {
        let series = Series::new(t.clone(), y, unit)
            .map_err(|source| EtlError::Dsp { path: path.to_string(), source })?;
        channels.push(Channel {
            name: names[k].clone(),
            series,
            gage: gages[k].clone(),
            placement: placements[k].clone(),
            calibration: calibrations[k],
        });
    }
    Ok(RawLog {
        path: path.to_string(),
        kind,
        header: header.into_iter().map(|(k, (_, v))| (k, v)).collect(),
        channels,
        warnings,
    })
}

fn parse_row(raw: &str, width: usize) -> Result<Vec<f64>, String> {
    let fields: Vec<&str> = raw.split(',').collect();
    if fields.len() != width {
        return Err(format!("expected {width} fields, found {}", fields.len()));
    }
    fields
        .iter()
        .map(|f| match f.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(format!("'{}' is not a finite number", f.trim())),
        })
        .collect()
}

fn resolve_kind(
    path: &str,
    given: Option<SensorKind>,
    header: Option<&(usize, String)>,
) -> Result<SensorKind, EtlError> {
    let from_header = match header {
        Some((line, v)) => Some(v.parse::<SensorKind>().map_err(|_| EtlError::Format {
            path: path.to_string(),
            line: *line,
            why: format!("unknown kind '{v}'"),
        })?),
        None => None,
    };
    match (given, from_header) {
        (Some(g), Some(h)) if g != h => Err(EtlError::Format {
            path: path.to_string(),
            line: header.map_or(0, |(l, _)| *l),
            why: format!("header says {h} but {g} was requested"),
        }),
        (Some(k), _) | (None, Some(k)) => Ok(k),
        (None, None) => {
            let meta = parse_filename(path);
            meta.sensor_type
                .as_deref()
                .and_then(SensorKind::from_sensor_type)
                .or(meta.instance.as_ref().map(|_| SensorKind::Asg))
                .ok_or_else(|| EtlError::UnknownKind(format!("cannot infer kind of {path}")))
        }
    }
}
