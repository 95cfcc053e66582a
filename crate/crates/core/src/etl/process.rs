use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime, TimeDelta};
use rayon::prelude::*;

use super::rawlog::{Channel, RawLog};
use super::{parse_filename, parse_raw_log, EtlError, FileMeta, SensorKind};
use crate::dsp::{
    calibrate, detect_extrema, extract_envelope, select_passes, DspConfig, Extremum, ExtremumKind, PassLabel, Series,
    DEFAULT_ENVELOPE_FRACTIONS, FIRST_PASSES, LAST_PASSES,
};

/// Denormalized sensor row; `filename` becomes `filename_id` on emission.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRow {
    pub filename: String,
    pub captured_instance: String,
    pub gage_id: String,
    pub placement: String,
    pub cal_coeff: f64,
    pub rated_output: f64,
    /// `maxima`, `minima` or `envelope`.
    pub extrema: String,
    pub seconds_elapsed: f64,
    pub processed_datapoint: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserRow {
    pub filename: String,
    /// 1-based.
    pub sample_number: u64,
    pub horiz_mm: f64,
    pub laser_reading_mm: f64,
    pub beam_location_mm: f64,
    /// Time of day, `HH:MM:SS.ffffff`; empty when the file has no start time.
    pub sampled_time: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedFile {
    pub meta: FileMeta,
    pub kind: SensorKind,
    pub rows: Vec<DataRow>,
    pub laser: Vec<LaserRow>,
    pub warnings: Vec<String>,
    /// Calibrated values whose magnitude exceeded the rated output.
    pub out_of_range: usize,
    pub envelope_truncated: usize,
}

/// Horizontal position of a laser sample: `n * (1384 / 8088)` mm.
pub fn laser_horizontal(sample_number: u64) -> f64 {
    sample_number as f64 * (1384.0 / 8088.0)
}

pub fn process_file(path: &Path, kind: Option<SensorKind>) -> Result<ProcessedFile, EtlError> {
    let log = parse_raw_log(path, kind)?;
    process_log(path, log)
}

/// Processes every `.txt`, `.csv` and `.dat` file directly under `dir`, in
/// parallel, returning results in filename order.
pub fn process_dir(dir: &Path, kind: Option<SensorKind>) -> Result<Vec<ProcessedFile>, EtlError> {
    let io_err = |source| EtlError::Io { path: dir.to_path_buf(), source };
    let mut files: Vec<PathBuf> = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("txt" | "csv" | "dat")) {
            files.push(path);
        } else if path.is_file() {
            log::warn!("skipping {}: not a raw log", path.display());
        }
    }
    files.sort();
    files.par_iter().map(|p| process_file(p, kind)).collect()
}

fn process_log(path: &Path, log: RawLog) -> Result<ProcessedFile, EtlError> {
    let path_str = path.display().to_string();
    let mut warnings = log.warnings.clone();
    let meta = merged_meta(path, &log, &mut warnings);
    let config = dsp_config(&path_str, &log)?;
    let dsp_err = |source| EtlError::Dsp { path: path_str.clone(), source };

    let mut out = ProcessedFile {
        meta,
        kind: log.kind,
        rows: Vec::new(),
        laser: Vec::new(),
        warnings: Vec::new(),
        out_of_range: 0,
        envelope_truncated: 0,
    };
    if log.kind.is_laser() {
        out.laser = laser_rows(&out.meta.filename, &log, &config, &mut warnings).map_err(dsp_err)?;
        out.warnings = warnings;
        return Ok(out);
    }
    for ch in &log.channels {
        let smoothed = config.smooth(&ch.series).map_err(dsp_err)?;
        let extrema = detect_extrema(&smoothed, &config);
        channel_rows(&mut out, ch, &smoothed, extrema);
    }
    if out.out_of_range > 0 {
        warnings.push(format!("{path_str}: {} values exceed rated output", out.out_of_range));
    }
    out.warnings = warnings;
    Ok(out)
}

fn channel_rows(out: &mut ProcessedFile, ch: &Channel, smoothed: &Series, extrema: Vec<Extremum>) {
    let kind = out.kind;
    let labeled = |e: Extremum| {
        let l = e.label.as_str().to_string();
        (e, l)
    };
    // `envelope` holds every maximum, since the envelope interval runs to the
    // next detected maximum whether or not that one is labeled
    let (selected, envelope): (Vec<(Extremum, String)>, Option<Vec<Extremum>>) = match kind {
        SensorKind::Asg => {
            let passes = select_passes(&extrema, FIRST_PASSES, LAST_PASSES);
            let peaks = passes
                .iter()
                .filter(|e| e.kind == ExtremumKind::Maxima && e.label != PassLabel::Unlabeled)
                .cloned()
                .map(labeled)
                .collect();
            (peaks, Some(passes))
        }
        SensorKind::Csg | SensorKind::Pc | SensorKind::Tc => {
            let mut passes = select_passes(&extrema, FIRST_PASSES, LAST_PASSES);
            // minima ahead of the first maximum belong to the first pass
            if let Some(first) = passes.iter().find(|e| e.kind == ExtremumKind::Maxima).map(|e| e.label) {
                for e in passes.iter_mut().take_while(|e| e.kind == ExtremumKind::Minima) {
                    e.label = first;
                }
            }
            (passes.into_iter().filter(|e| e.label != PassLabel::Unlabeled).map(labeled).collect(), None)
        }
        SensorKind::StationaryEt | SensorKind::StationaryMt => {
            // no passes here; mark every maximum so each one gets an envelope
            let marked = extrema.iter().map(|e| Extremum { label: PassLabel::First20, ..e.clone() }).collect();
            (extrema.into_iter().map(|e| (e, "stationary".to_string())).collect(), Some(marked))
        }
        SensorKind::Fwd => (extrema.into_iter().map(|e| (e, "fwd".to_string())).collect(), None),
        SensorKind::Laser | SensorKind::LaserPretraffic => unreachable!("laser handled separately"),
    };

    let cal = ch.calibration.expect("non-laser channels carry calibration");
    let mut rows: Vec<DataRow> = Vec::new();
    let mut push = |out: &mut ProcessedFile, instance: &str, extrema: &str, t: f64, raw: f64| {
        let c = calibrate(raw, &cal);
        out.out_of_range += usize::from(c.out_of_range);
        rows.push(DataRow {
            filename: out.meta.filename.clone(),
            captured_instance: instance.to_string(),
            gage_id: ch.gage.clone(),
            placement: ch.placement.clone(),
            cal_coeff: cal.cal_coeff,
            rated_output: cal.rated_output,
            extrema: extrema.to_string(),
            seconds_elapsed: t,
            processed_datapoint: c.value,
            unit: kind.unit().to_string(),
        });
    };
    for (e, label) in &selected {
        push(out, label, &e.kind.to_string(), e.t, e.value);
    }
    if let Some(all) = envelope {
        let env = extract_envelope(smoothed, &all, &DEFAULT_ENVELOPE_FRACTIONS);
        out.envelope_truncated += env.truncated;
        for p in &env.points {
            let label = if kind.is_stationary() { "stationary" } else { p.label.as_str() };
            push(out, label, "envelope", p.t, p.value);
        }
    }
    rows.sort_by(|a, b| a.seconds_elapsed.total_cmp(&b.seconds_elapsed));
    out.rows.extend(rows);
}

fn laser_rows(
    filename: &str,
    log: &RawLog,
    config: &DspConfig,
    warnings: &mut Vec<String>,
) -> Result<Vec<LaserRow>, crate::dsp::DspError> {
    let reading = &log.channels[0].series;
    let beam = &log.channels[1].series;
    let smoothed = config.smooth(reading)?;
    let start = match log.get("start_time") {
        Some(s) => match NaiveTime::parse_from_str(s, "%H:%M:%S%.f") {
            Ok(t) => Some(t),
            Err(_) => {
                warnings.push(format!("{}: unreadable start_time '{s}'", log.path));
                None
            }
        },
        None => None,
    };
    Ok((0..reading.len())
        .map(|i| {
            let n = i as u64 + 1;
            let sampled_time = start
                .map(|s| {
                    let offset = TimeDelta::microseconds((reading.t[i] * 1e6).round() as i64);
                    (s + offset).format("%H:%M:%S%.6f").to_string()
                })
                .unwrap_or_default();
            LaserRow {
                filename: filename.to_string(),
                sample_number: n,
                horiz_mm: laser_horizontal(n),
                laser_reading_mm: smoothed.y[i],
                beam_location_mm: beam.y[i],
                sampled_time,
            }
        })
        .collect())
}

fn dsp_config(path: &str, log: &RawLog) -> Result<DspConfig, EtlError> {
    let mut c = log.kind.default_dsp();
    let bad = |key: &str, v: &str| EtlError::Format { path: path.to_string(), line: 0, why: format!("bad {key} '{v}'") };
    if let Some(v) = log.get("window") {
        c.window = v.parse().map_err(|_| bad("window", v))?;
    }
    if let Some(v) = log.get("polyorder") {
        c.polyorder = v.parse().map_err(|_| bad("polyorder", v))?;
    }
    if let Some(v) = log.get("min_separation_s") {
        c.min_separation_s = v.parse().map_err(|_| bad("min_separation_s", v))?;
    }
    if let Some(v) = log.get("prominence_fraction") {
        c.prominence_fraction = v.parse().map_err(|_| bad("prominence_fraction", v))?;
    }
    c.validate().map_err(|source| EtlError::Dsp { path: path.to_string(), source })?;
    Ok(c)
}

/// Filename fields first; the raw header fills whatever the name lacks.
fn merged_meta(path: &Path, log: &RawLog, warnings: &mut Vec<String>) -> FileMeta {
    let mut meta = parse_filename(&path.display().to_string());
    let fill = |slot: &mut Option<String>, key: &str| {
        if slot.is_none() {
            *slot = log.get(key).map(str::to_string);
        }
    };
    fill(&mut meta.project_name, "project");
    fill(&mut meta.test_section, "test_section");
    fill(&mut meta.sensor_type, "sensor_type");
    fill(&mut meta.location, "location");
    fill(&mut meta.gage_id, "gage");
    fill(&mut meta.description, "description");
    if meta.sensor_type.is_none() {
        meta.sensor_type = Some(log.kind.name().to_string());
    }
    if meta.survey_date.is_none() {
        if let Some(d) = log.get("survey_date") {
            match NaiveDate::parse_from_str(d, "%Y-%m-%d") {
                Ok(date) => meta.survey_date = Some(date),
                Err(_) => warnings.push(format!("{}: unreadable survey_date '{d}'", log.path)),
            }
        }
    }
    if meta.unparsed {
        warnings.push(format!("{}: filename matches no known grammar", log.path));
    }
    meta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_mapping() {
        assert_eq!(laser_horizontal(0), 0.0);
        assert!((laser_horizontal(1) - 0.171117705).abs() < 1e-9);
        assert!((laser_horizontal(4) - 0.684470821).abs() < 1e-9);
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn thermocouple_extrema_only() {
        // 3 full cosine cycles at 10 Hz: 3 maxima and 3 minima, no envelope
        let mut text = String::from("# kind: TC\n# cal_coeff: 1\n# rated_output: 500\n# min_separation_s: 2\nseconds,tc\n");
        for i in 0..600 {
            let t = i as f64 / 10.0;
            let y = 70.0 - 10.0 * (2.0 * std::f64::consts::PI * (t - 5.0) / 20.0).cos();
            text.push_str(&format!("{t},{y}\n"));
        }
        let dir = tempfile::tempdir().unwrap();
        let out = process_file(&write(dir.path(), "tc.txt", &text), None).unwrap();
        let count = |e: &str| out.rows.iter().filter(|r| r.extrema == e).count();
        assert_eq!((count("maxima"), count("minima"), count("envelope")), (3, 3, 0));
        assert!(out.rows.iter().all(|r| r.unit == "degF" && r.captured_instance == "first20"));
    }

    #[test]
    fn asg_first_and_last_passes() {
        // 60 pulses, period 10 s, sampled at 20 Hz, with a trailing full period
        let mut text = String::from("# kind: ASG\n# gage: 104\n# cal_coeff: 2\n# rated_output: 5890\n# window: 51\nseconds,a\n");
        for i in 0..(605 * 20) {
            let t = i as f64 / 20.0;
            let phase = t.rem_euclid(10.0) - 5.0;
            text.push_str(&format!("{t},{}\n", 100.0 * (-phase * phase / 2.0).exp()));
        }
        let dir = tempfile::tempdir().unwrap();
        let out = process_file(&write(dir.path(), "Traffic D1 F20 07-07-22.txt", &text), None).unwrap();
        let peaks: Vec<&DataRow> = out.rows.iter().filter(|r| r.extrema == "maxima").collect();
        let env = out.rows.iter().filter(|r| r.extrema == "envelope").count();
        assert_eq!(peaks.len(), 40);
        assert_eq!(env, 200);
        assert_eq!(out.envelope_truncated, 0);
        assert_eq!(peaks.iter().filter(|r| r.captured_instance == "first20").count(), 20);
        assert!((peaks[20].seconds_elapsed - 405.0).abs() < 1e-9);
        // calibration doubles the smoothed peak
        assert!(peaks.iter().all(|r| r.processed_datapoint > 150.0 && r.processed_datapoint <= 200.0));
        assert_eq!(out.meta.instance.as_deref(), Some("F20"));
    }

    #[test]
    fn laser_rows_cover_every_sample() {
        let mut text = String::from("# kind: LASER\n# start_time: 10:00:00\nseconds,laser_reading_mm,beam_location_mm\n");
        for i in 0..1200 {
            text.push_str(&format!("{},{},{}\n", i as f64 * 0.001, 5.0 + 0.001 * i as f64, 100.0));
        }
        let dir = tempfile::tempdir().unwrap();
        let out = process_file(&write(dir.path(), "l.txt", &text), None).unwrap();
        assert_eq!(out.laser.len(), 1200);
        assert_eq!(out.laser[3].sample_number, 4);
        assert_eq!(out.laser[3].sampled_time, "10:00:00.003000");
        // linear input survives smoothing
        assert!((out.laser[600].laser_reading_mm - 5.6).abs() < 1e-9);
    }
}
