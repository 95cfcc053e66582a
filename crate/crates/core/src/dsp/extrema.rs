use std::collections::BTreeSet;
use std::fmt;

use super::{DspConfig, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExtremumKind {
    Maxima,
    Minima,
}

impl fmt::Display for ExtremumKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtremumKind::Maxima => "maxima",
            ExtremumKind::Minima => "minima",
        })
    }
}

/// Which group of load passes a feature belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassLabel {
    First20,
    Last20,
    Unlabeled,
}

impl PassLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PassLabel::First20 => "first20",
            PassLabel::Last20 => "last20",
            PassLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for PassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extremum {
    pub kind: ExtremumKind,
    pub index: usize,
    pub t: f64,
    pub value: f64,
    pub label: PassLabel,
}

/// Indices of strict local maxima. A flat top counts once, at its middle
/// sample (rounded down).
pub fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut peaks = Vec::new();
    if n < 3 {
        return peaks;
    }
    let mut i = 1;
    while i < n - 1 {
        if y[i - 1] < y[i] {
            let mut ahead = i + 1;
            while ahead < n - 1 && y[ahead] == y[i] {
                ahead += 1;
            }
            if y[ahead] < y[i] {
                peaks.push((i + ahead - 1) / 2);
                i = ahead;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

/// Topographic prominence of every index, computed for the whole signal in
/// two monotonic-stack passes. For a peak at `p`, the left base is the lowest
/// sample between `p` and the nearest strictly higher sample on its left (or
/// the start of the signal); the right base likewise. The prominence is the
/// height above the higher of the two bases.
pub fn prominences(y: &[f64], peaks: &[usize]) -> Vec<f64> {
    let left = base_minima(y.iter().copied());
    let mut right = base_minima(y.iter().rev().copied());
    right.reverse();
    peaks
        .iter()
        .map(|&p| y[p] - left[p].max(right[p]))
        .collect()
}

/// For each position, the minimum over the stretch back to (not including)
/// the nearest strictly greater earlier value.
fn base_minima(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut stack: Vec<(f64, f64)> = Vec::new();
    let mut out = Vec::new();
    for v in values {
        let mut low = v;
        while let Some(&(top, seg_min)) = stack.last() {
            if top <= v {
                low = low.min(seg_min);
                stack.pop();
            } else {
                break;
            }
        }
        out.push(low);
        stack.push((v, low));
    }
    out
}

/// Peaks of `y` with prominence at least `min_prominence`, thinned so that no
/// two kept peaks are closer than `min_separation` in `t`. Conflicts keep the
/// higher peak (the earlier one on exact ties). Returned in index order.
pub fn find_peaks(t: &[f64], y: &[f64], min_prominence: f64, min_separation: f64) -> Vec<usize> {
    let candidates = local_maxima(y);
    let prom = prominences(y, &candidates);
    let mut strong: Vec<usize> = candidates
        .iter()
        .zip(&prom)
        .filter(|(_, &p)| p > 0.0 && p >= min_prominence)
        .map(|(&i, _)| i)
        .collect();
    if min_separation <= 0.0 {
        return strong;
    }
    strong.sort_by(|&a, &b| y[b].total_cmp(&y[a]).then(a.cmp(&b)));
    let mut kept: BTreeSet<usize> = BTreeSet::new();
    for i in strong {
        let before = kept.range(..i).next_back();
        let after = kept.range(i..).next();
        let clash = before.is_some_and(|&j| t[i] - t[j] < min_separation)
            || after.is_some_and(|&j| t[j] - t[i] < min_separation);
        if !clash {
            kept.insert(i);
        }
    }
    kept.into_iter().collect()
}

/// Maxima and minima of a (smoothed) series, sorted by time.
///
/// The prominence threshold is `prominence_fraction` times the series'
/// peak-to-peak range, so the result is unchanged by positive affine
/// rescaling of the values.
pub fn detect_extrema(series: &Series, config: &DspConfig) -> Vec<Extremum> {
    let y = &series.y;
    if y.len() < 3 {
        return Vec::new();
    }
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 0.0 {
        return Vec::new();
    }
    let min_prom = config.prominence_fraction * range;
    let sep = config.min_separation_s;

    let maxima = find_peaks(&series.t, y, min_prom, sep);
    let negated: Vec<f64> = y.iter().map(|v| -v).collect();
    let minima = find_peaks(&series.t, &negated, min_prom, sep);

    let make = |kind, index: usize| Extremum {
        kind,
        index,
        t: series.t[index],
        value: y[index],
        label: PassLabel::Unlabeled,
    };
    let mut out: Vec<Extremum> = maxima
        .into_iter()
        .map(|i| make(ExtremumKind::Maxima, i))
        .chain(minima.into_iter().map(|i| make(ExtremumKind::Minima, i)))
        .collect();
    out.sort_by_key(|e| e.index);
    out
}
