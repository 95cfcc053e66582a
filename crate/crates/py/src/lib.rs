//! Python bindings for paveflow: subjects, smoothing, extrema and envelope
//! extraction, filename parsing and the time-series store.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use paveflow::connector;
use paveflow::dsp::{self, DspConfig, Series};
use paveflow::etl;
use paveflow::tsstore::{self, Aggregation, Sample, StoreOptions};
use paveflow::wire;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

/// A subject or subscription pattern.
#[pyclass(module = "paveflow_py", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash)]
struct Subject {
    inner: wire::Subject,
}

#[pymethods]
impl Subject {
    /// Parses a pattern; `*` and a trailing `>` are allowed.
    #[new]
    fn new(s: &str) -> PyResult<Self> {
        wire::Subject::pattern(s).map(|inner| Subject { inner }).map_err(value_err)
    }

    /// Parses a concrete subject, rejecting wildcards.
    #[staticmethod]
    fn concrete(s: &str) -> PyResult<Self> {
        wire::Subject::concrete(s).map(|inner| Subject { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn from_mqtt(topic: &str) -> PyResult<Self> {
        wire::mqtt_topic_to_subject(topic).map(|inner| Subject { inner }).map_err(value_err)
    }

    fn to_mqtt(&self) -> String {
        wire::subject_to_mqtt_topic(&self.inner)
    }

    #[getter]
    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().to_vec()
    }

    #[getter]
    fn is_pattern(&self) -> bool {
        self.inner.is_pattern()
    }

    fn matches(&self, subject: &Subject) -> bool {
        self.inner.matches(&subject.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Subject('{}')", self.inner)
    }
}

/// Store key for `site.<s>.daq.<d>.sensor.<id>`, or ValueError.
#[pyfunction]
fn sensor_key(subject: &str) -> PyResult<String> {
    let s = wire::Subject::concrete(subject).map_err(value_err)?;
    connector::sensor_key(&s).map_err(|r| value_err(r.detail))
}

/// Validates a payload received on `subject`; returns `(sensor, ts, v, seq)`.
#[pyfunction]
fn transform(subject: &str, payload: &[u8]) -> PyResult<(String, i64, f64, u64)> {
    let s = wire::Subject::concrete(subject).map_err(value_err)?;
    let r = connector::transform(&s, payload).map_err(|r| value_err(format!("{}: {}", r.reason, r.detail)))?;
    Ok((r.sensor, r.ts, r.v, r.seq))
}

#[pyfunction]
#[pyo3(signature = (window, polyorder, eval_at=0))]
fn savgol_weights(window: usize, polyorder: usize, eval_at: i64) -> PyResult<Vec<f64>> {
    dsp::savgol_weights_at(window, polyorder, eval_at).map_err(value_err)
}

/// Savitzky-Golay smoothing with one-sided fits at both edges.
#[pyfunction]
fn savgol_filter(y: Vec<f64>, window: usize, polyorder: usize) -> PyResult<Vec<f64>> {
    dsp::savgol_filter(&y, window, polyorder).map_err(value_err)
}

/// A detected peak or trough.
#[pyclass(module = "paveflow_py", frozen, get_all, from_py_object)]
#[derive(Clone)]
struct Extremum {
    kind: String,
    index: usize,
    t: f64,
    value: f64,
    label: String,
}

impl From<&dsp::Extremum> for Extremum {
    fn from(e: &dsp::Extremum) -> Self {
        Extremum { kind: e.kind.to_string(), index: e.index, t: e.t, value: e.value, label: e.label.to_string() }
    }
}

#[pymethods]
impl Extremum {
    fn __repr__(&self) -> String {
        format!("Extremum({} #{} t={} value={} {})", self.kind, self.index, self.t, self.value, self.label)
    }
}

fn series(t: Vec<f64>, y: Vec<f64>) -> PyResult<Series> {
    Series::new(t, y, "").map_err(value_err)
}

fn parse_kind(s: &str) -> PyResult<dsp::ExtremumKind> {
    match s {
        "maxima" => Ok(dsp::ExtremumKind::Maxima),
        "minima" => Ok(dsp::ExtremumKind::Minima),
        other => Err(value_err(format!("unknown extremum kind '{other}'"))),
    }
}

fn parse_label(s: &str) -> PyResult<dsp::PassLabel> {
    match s {
        "first20" => Ok(dsp::PassLabel::First20),
        "last20" => Ok(dsp::PassLabel::Last20),
        "unlabeled" => Ok(dsp::PassLabel::Unlabeled),
        other => Err(value_err(format!("unknown pass label '{other}'"))),
    }
}

fn to_core(list: &[Extremum]) -> PyResult<Vec<dsp::Extremum>> {
    list.iter()
        .map(|e| {
            Ok(dsp::Extremum {
                kind: parse_kind(&e.kind)?,
                index: e.index,
                t: e.t,
                value: e.value,
                label: parse_label(&e.label)?,
            })
        })
        .collect()
}

/// Smooths `y` and returns its prominent maxima and minima in time order.
#[pyfunction]
#[pyo3(signature = (t, y, window=1001, polyorder=2, min_separation_s=5.0, prominence_fraction=0.2))]
fn detect_extrema(
    t: Vec<f64>,
    y: Vec<f64>,
    window: usize,
    polyorder: usize,
    min_separation_s: f64,
    prominence_fraction: f64,
) -> PyResult<Vec<Extremum>> {
    let cfg = DspConfig { window, polyorder, min_separation_s, prominence_fraction };
    cfg.validate().map_err(value_err)?;
    let s = series(t, y)?;
    Ok(dsp::detect_extrema(&s, &cfg).iter().map(Extremum::from).collect())
}

/// Labels the first `first_n` and last `last_n` maxima and their troughs.
#[pyfunction]
#[pyo3(signature = (extrema, first_n=dsp::FIRST_PASSES, last_n=dsp::LAST_PASSES))]
fn select_passes(extrema: Vec<Extremum>, first_n: usize, last_n: usize) -> PyResult<Vec<Extremum>> {
    let core = to_core(&extrema)?;
    Ok(dsp::select_passes(&core, first_n, last_n).iter().map(Extremum::from).collect())
}

/// Recovery-curve samples after each labeled maximum, as
/// `(points, truncated)` with points `(pass, label, fraction, t, value)`.
#[pyfunction]
#[pyo3(signature = (t, y, extrema, fractions=None))]
#[allow(clippy::type_complexity)]
fn extract_envelope(
    t: Vec<f64>,
    y: Vec<f64>,
    extrema: Vec<Extremum>,
    fractions: Option<Vec<f64>>,
) -> PyResult<(Vec<(usize, String, f64, f64, f64)>, usize)> {
    let s = series(t, y)?;
    let core = to_core(&extrema)?;
    let fractions = fractions.unwrap_or_else(|| dsp::DEFAULT_ENVELOPE_FRACTIONS.to_vec());
    let env = dsp::extract_envelope(&s, &core, &fractions);
    let points = env.points.into_iter().map(|p| (p.pass, p.label.to_string(), p.fraction, p.t, p.value)).collect();
    Ok((points, env.truncated))
}

/// Returns `(value, out_of_range)`.
#[pyfunction]
fn calibrate(raw: f64, cal_coeff: f64, rated_output: f64) -> PyResult<(f64, bool)> {
    let spec = dsp::CalibrationSpec::new(cal_coeff, rated_output).map_err(value_err)?;
    let c = dsp::calibrate(raw, &spec);
    Ok((c.value, c.out_of_range))
}

/// Horizontal position in mm of laser sample `n`.
#[pyfunction]
fn laser_horizontal(n: u64) -> f64 {
    etl::laser_horizontal(n)
}

/// Filename metadata as a dict; absent fields are None.
#[pyfunction]
fn parse_filename(py: Python<'_>, name: &str) -> PyResult<Py<pyo3::types::PyDict>> {
    let m = etl::parse_filename(name);
    let d = pyo3::types::PyDict::new(py);
    d.set_item("filename", m.filename)?;
    d.set_item("project_name", m.project_name)?;
    d.set_item("test_section", m.test_section)?;
    d.set_item("sensor_type", m.sensor_type)?;
    d.set_item("location", m.location)?;
    d.set_item("gage_id", m.gage_id)?;
    d.set_item("survey_date", m.survey_date.map(|d| d.format("%Y-%m-%d").to_string()))?;
    d.set_item("description", m.description)?;
    d.set_item("instance", m.instance)?;
    d.set_item("unparsed", m.unparsed)?;
    Ok(d.unbind())
}

/// `(sensor, window_start)` of the chunk holding `ts`.
#[pyfunction]
#[pyo3(signature = (sensor, ts, span=tsstore::DEFAULT_CHUNK_SPAN_US))]
fn chunk_for(sensor: &str, ts: i64, span: i64) -> PyResult<(String, i64)> {
    if span <= 0 {
        return Err(value_err("chunk span must be positive"));
    }
    let k = tsstore::chunk_for(sensor, ts, span);
    Ok((k.sensor, k.window_start))
}

/// Embedded per-sensor time-series store.
#[pyclass(module = "paveflow_py")]
struct Store {
    inner: Option<tsstore::Store>,
}

impl Store {
    fn get(&self) -> PyResult<&tsstore::Store> {
        self.inner.as_ref().ok_or_else(|| value_err("store is closed"))
    }
}

#[pymethods]
impl Store {
    #[new]
    #[pyo3(signature = (root, chunk_span_us=tsstore::DEFAULT_CHUNK_SPAN_US))]
    fn new(root: PathBuf, chunk_span_us: i64) -> PyResult<Self> {
        let opts = StoreOptions { chunk_span_us, ..Default::default() };
        tsstore::Store::open(root, opts).map(|s| Store { inner: Some(s) }).map_err(io_err)
    }

    /// Inserts `(sensor, ts, v)` rows; returns `(stored, duplicates, rejected)`.
    fn insert(&self, py: Python<'_>, rows: Vec<(String, i64, f64)>) -> PyResult<(usize, usize, usize)> {
        let store = self.get()?;
        let batch: Vec<Sample> = rows.into_iter().map(|(s, ts, v)| Sample::new(s, ts, v)).collect();
        let r = py.detach(|| store.insert(&batch));
        Ok((r.stored, r.duplicates, r.rejected))
    }

    /// Samples with `t0 <= ts < t1` as `(ts, v)`.
    fn query_range(&self, py: Python<'_>, sensor: &str, t0: i64, t1: i64) -> PyResult<Vec<(i64, f64)>> {
        let store = self.get()?;
        let v = py.detach(|| store.query_range(sensor, t0, t1)).map_err(value_err)?;
        Ok(v.into_iter().map(|s| (s.ts, s.v)).collect())
    }

    /// Bucketed aggregate (`avg`, `min`, `max` or `count`) as `(bucket_start, value)`.
    fn downsample(&self, sensor: &str, t0: i64, t1: i64, bucket_us: i64, agg: &str) -> PyResult<Vec<(i64, f64)>> {
        let agg: Aggregation = agg.parse().map_err(value_err)?;
        self.get()?.downsample(sensor, t0, t1, bucket_us, agg).map_err(value_err)
    }

    fn sensors(&self) -> PyResult<Vec<String>> {
        Ok(self.get()?.sensors())
    }

    fn record_count(&self) -> PyResult<u64> {
        Ok(self.get()?.record_count())
    }

    fn flush(&self) -> PyResult<()> {
        self.get()?.flush().map_err(io_err)
    }

    fn close(&mut self) -> PyResult<()> {
        match self.inner.take() {
            Some(s) => s.close().map_err(io_err),
            None => Ok(()),
        }
    }

    fn __enter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __exit__(
        &mut self,
        _ty: Option<&Bound<'_, PyAny>>,
        _value: Option<&Bound<'_, PyAny>>,
        _tb: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<bool> {
        self.close()?;
        Ok(false)
    }
}

#[pymodule]
fn paveflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Subject>()?;
    m.add_class::<Extremum>()?;
    m.add_class::<Store>()?;
    m.add_function(wrap_pyfunction!(sensor_key, m)?)?;
    m.add_function(wrap_pyfunction!(transform, m)?)?;
    m.add_function(wrap_pyfunction!(savgol_weights, m)?)?;
    m.add_function(wrap_pyfunction!(savgol_filter, m)?)?;
    m.add_function(wrap_pyfunction!(detect_extrema, m)?)?;
    m.add_function(wrap_pyfunction!(select_passes, m)?)?;
    m.add_function(wrap_pyfunction!(extract_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(laser_horizontal, m)?)?;
    m.add_function(wrap_pyfunction!(parse_filename, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_for, m)?)?;
    Ok(())
}
