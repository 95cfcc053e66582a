use super::{Extremum, ExtremumKind, PassLabel, Series};

pub const DEFAULT_ENVELOPE_FRACTIONS: [f64; 5] = [0.30, 0.45, 0.60, 0.75, 0.90];

/// `k` fractions evenly spread over `[0.30, 0.90]`; `k = 5` gives the defaults.
pub fn envelope_fractions(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.60],
        _ => (0..k).map(|j| 0.30 + 0.60 * j as f64 / (k - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint {
    /// Ordinal of the owning maximum among all detected maxima.
    pub pass: usize,
    pub label: PassLabel,
    pub fraction: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Envelope {
    pub points: Vec<EnvelopePoint>,
    /// Points dropped because they fell past the end of the series.
    pub truncated: usize,
}

/// Linear interpolation of the series at time `t` (clamped to its ends).
pub fn sample_at(series: &Series, t: f64) -> f64 {
    let ts = &series.t;
    let hi = ts.partition_point(|&x| x < t);
    if hi == 0 {
        return series.y[0];
    }
    if hi == ts.len() {
        return series.y[ts.len() - 1];
    }
    let (t0, t1) = (ts[hi - 1], ts[hi]);
    let (y0, y1) = (series.y[hi - 1], series.y[hi]);
    if t1 == t {
        return y1;
    }
    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
}

/// Samples the elastic-recovery curve after every labeled maximum.
///
/// For each labeled maximum, one point per fraction `f` is taken at
/// `t_peak + f * dt`, where `dt` runs to the next detected maximum. The final
/// maximum has no successor; it reuses the preceding inter-peak interval (or
/// the distance to the series end when it is the only one), and points past
/// the end of the series are dropped and counted in `truncated`.
pub fn extract_envelope(series: &Series, extrema: &[Extremum], fractions: &[f64]) -> Envelope {
    let mut env = Envelope::default();
    if fractions.is_empty() || series.is_empty() {
        return env;
    }
    let t_end = *series.t.last().expect("non-empty");
    let maxima: Vec<&Extremum> = extrema.iter().filter(|e| e.kind == ExtremumKind::Maxima).collect();
    for (pass, peak) in maxima.iter().enumerate() {
        if peak.label == PassLabel::Unlabeled {
            continue;
        }
        let dt = match maxima.get(pass + 1) {
            Some(next) => next.t - peak.t,
            None if pass > 0 => peak.t - maxima[pass - 1].t,
            None => t_end - peak.t,
        };
        if dt <= 0.0 {
            env.truncated += fractions.len();
            continue;
        }
        for &fraction in fractions {
            let t = peak.t + fraction * dt;
            if t > t_end {
                env.truncated += 1;
                continue;
            }
            env.points.push(EnvelopePoint { pass, label: peak.label, fraction, t, value: sample_at(series, t) });
        }
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fraction_set() {
        let f = envelope_fractions(5);
        for (a, b) in f.iter().zip(DEFAULT_ENVELOPE_FRACTIONS) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(envelope_fractions(0).is_empty());
        assert!(envelope_fractions(7).iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn interpolation() {
        let s = Series::new(vec![0.0, 1.0, 2.0], vec![0.0, 10.0, 30.0], "x").unwrap();
        assert_eq!(sample_at(&s, 0.5), 5.0);
        assert_eq!(sample_at(&s, 2.0), 30.0);
        assert_eq!(sample_at(&s, 1.25), 15.0);
        assert_eq!(sample_at(&s, -1.0), 0.0);
    }
}
