mod common;

use common::LsqOracle;
use paveflow::dsp::{
    detect_extrema, envelope_fractions, extract_envelope, sample_at, savgol_filter, savgol_weights, select_passes,
    DspConfig, Extremum, ExtremumKind, PassLabel, Series,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn series(t: Vec<f64>, y: Vec<f64>) -> Series {
    Series::new(t, y, "").unwrap()
}

#[test]
fn window_101_matches_per_window_fit_everywhere() {
    let y = noise(1, 2000);
    let got = savgol_filter(&y, 101, 2).unwrap();
    let want = LsqOracle::new(101, 2).smooth_all(&y);
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).abs() <= 1e-9 * w.abs().max(1e-3), "point {i}: {g} vs {w}");
    }
}

#[test]
fn five_point_quadratic_by_hand() {
    // normal equations for x = -2..2: [5 0 10; 0 10 0; 10 0 34] c = A^T y,
    // center row of the inverse times A^T gives (-3, 12, 17, 12, -3) / 35
    let w = savgol_weights(5, 2).unwrap();
    let want = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|x| x / 35.0);
    for (a, b) in w.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    let oracle = LsqOracle::new(5, 2);
    for k in 0..5 {
        let mut e = [0.0; 5];
        e[k] = 1.0;
        assert!((oracle.fit_center(&e) - want[k]).abs() < 1e-14);
    }
}

#[test]
fn sine_has_twenty_maxima_ten_seconds_apart() {
    let t: Vec<f64> = (0..2000).map(|i| i as f64 / 10.0).collect();
    let y: Vec<f64> = t.iter().map(|t| (2.0 * std::f64::consts::PI * t / 10.0).sin()).collect();
    let cfg = DspConfig { window: 11, ..Default::default() };
    let ext = detect_extrema(&series(t, y), &cfg);
    let maxima: Vec<&Extremum> = ext.iter().filter(|e| e.kind == ExtremumKind::Maxima).collect();
    assert_eq!(maxima.len(), 20);
    for w in maxima.windows(2) {
        assert!((w[1].t - w[0].t - 10.0).abs() < 0.11);
    }
    assert!(ext.windows(2).all(|w| w[0].t <= w[1].t));
}

#[test]
fn traffic_peaks_from_the_published_table() {
    // pulses at the maxima reported for "Traffic D1 F20 07-07-22.txt"
    let peaks = [9.7004, 19.5662, 30.9986, 42.6466];
    let fs = 50.0;
    let t: Vec<f64> = (0..(50.0 * fs) as usize).map(|i| i as f64 / fs).collect();
    let y: Vec<f64> = t
        .iter()
        .map(|t| -0.19 + peaks.iter().map(|p| 0.05 * (-(t - p) * (t - p) / 0.5).exp()).sum::<f64>())
        .collect();
    let cfg = DspConfig { window: 51, ..Default::default() };
    let maxima: Vec<f64> = detect_extrema(&series(t, y), &cfg)
        .into_iter()
        .filter(|e| e.kind == ExtremumKind::Maxima)
        .map(|e| e.t)
        .collect();
    assert_eq!(maxima.len(), 4);
    for (got, want) in maxima.iter().zip(peaks) {
        assert!((got - want).abs() <= 1.0 / fs, "{got} vs {want}");
    }
    assert!(maxima.windows(2).all(|w| (9.0..=12.0).contains(&(w[1] - w[0]))));
}

#[test]
fn thirty_maxima_all_labeled_once() {
    let ext: Vec<Extremum> = (0..30)
        .map(|i| Extremum { kind: ExtremumKind::Maxima, index: i, t: i as f64, value: 1.0, label: PassLabel::Unlabeled })
        .collect();
    let out = select_passes(&ext, 20, 20);
    let first = out.iter().filter(|e| e.label == PassLabel::First20).count();
    let last = out.iter().filter(|e| e.label == PassLabel::Last20).count();
    assert_eq!((first, last), (20, 10));
}

#[test]
fn envelope_on_closed_form_recovery_curve() {
    // peaks at 10 s and 20 s, exponential recovery between, sampled at 10 Hz
    let t: Vec<f64> = (0..400).map(|i| i as f64 / 10.0).collect();
    let curve = |t: f64| {
        let since = (t - 10.0).rem_euclid(10.0);
        if t < 10.0 {
            0.0
        } else {
            100.0 * (-since / 2.0).exp()
        }
    };
    let y: Vec<f64> = t.iter().map(|&x| curve(x)).collect();
    let s = series(t, y);
    let peak = |t: f64| Extremum { kind: ExtremumKind::Maxima, index: (t * 10.0) as usize, t, value: 100.0, label: PassLabel::First20 };
    let env = extract_envelope(&s, &[peak(10.0), peak(20.0), peak(30.0)], &envelope_fractions(5));
    assert_eq!(env.points.len(), 15);
    for p in &env.points {
        let t0 = 10.0 * (p.pass + 1) as f64;
        assert!((p.t - (t0 + p.fraction * 10.0)).abs() < 1e-12);
        assert!((p.value - curve(p.t)).abs() < 1e-9 * 100.0, "{p:?}");
        assert!((p.value - sample_at(&s, p.t)).abs() < 1e-12);
    }
    assert!(extract_envelope(&s, &[peak(10.0)], &[]).points.is_empty());
}

#[test]
fn envelope_truncates_past_series_end() {
    let t: Vec<f64> = (0..=250).map(|i| i as f64 / 10.0).collect();
    let y = vec![0.0; t.len()];
    let s = series(t, y);
    let peak = |t: f64| Extremum { kind: ExtremumKind::Maxima, index: 0, t, value: 0.0, label: PassLabel::Last20 };
    // the last peak reuses the 10 s interval; 25 s ends the series after 30%
    let env = extract_envelope(&s, &[peak(12.0), peak(22.0)], &envelope_fractions(5));
    assert_eq!(env.points.len() + env.truncated, 10);
    assert_eq!(env.truncated, 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn polynomials_reproduced(c in prop::collection::vec(-1.0f64..1.0, 3), window in prop::sample::select(vec![5usize, 11, 51, 101])) {
        let n = 400;
        let y: Vec<f64> = (0..n).map(|i| { let x = i as f64 / n as f64; c[0] + c[1] * x + c[2] * x * x }).collect();
        let s = savgol_filter(&y, window, 2).unwrap();
        for (a, b) in s.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn smoothing_is_linear(seed in any::<u64>(), a in -10.0f64..10.0, b in -10.0f64..10.0, order in 1usize..4) {
        let (y1, y2) = (noise(seed, 300), noise(seed ^ 0xdead, 300));
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(p, q)| a * p + b * q).collect();
        let lhs = savgol_filter(&mix, 21, order).unwrap();
        let (s1, s2) = (savgol_filter(&y1, 21, order).unwrap(), savgol_filter(&y2, 21, order).unwrap());
        for i in 0..300 {
            prop_assert!((lhs[i] - (a * s1[i] + b * s2[i])).abs() <= 1e-12);
        }
    }

    #[test]
    fn extrema_invariant_under_positive_affine_maps(seed in any::<u64>(), a in 0.01f64..100.0, b in -1000.0f64..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t: Vec<f64> = (0..1500).map(|i| i as f64 / 20.0).collect();
        let phase: f64 = rng.random_range(0.0..10.0);
        let y: Vec<f64> = t
            .iter()
            .map(|t| (2.0 * std::f64::consts::PI * (t + phase) / 9.0).sin() + 0.3 * (t / 3.1).cos())
            .collect();
        let cfg = DspConfig { window: 21, ..Default::default() };
        let base: Vec<(ExtremumKind, usize)> = detect_extrema(&series(t.clone(), y.clone()), &cfg).iter().map(|e| (e.kind, e.index)).collect();
        let mapped: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        let moved: Vec<(ExtremumKind, usize)> = detect_extrema(&series(t, mapped), &cfg).iter().map(|e| (e.kind, e.index)).collect();
        prop_assert!(!base.is_empty());
        prop_assert_eq!(base, moved);
    }

    #[test]
    fn weights_sum_to_one_and_are_symmetric(half in 1usize..60, order in 1usize..6) {
        let window = 2 * half + 1;
        prop_assume!(order < window);
        let w = savgol_weights(window, order).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 0..window {
            prop_assert!((w[k] - w[window - 1 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn prominence_is_range_relative(frac in 0.05f64..0.95) {
        // two bumps of height 1 and 0.5 on a flat line
        let t: Vec<f64> = (0..400).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = t.iter().map(|t| (-(t - 10.0) * (t - 10.0)).exp() + 0.5 * (-(t - 30.0) * (t - 30.0)).exp()).collect();
        // the smaller bump's prominence is almost exactly half the range
        prop_assume!(!(0.48..0.52).contains(&frac));
        let cfg = DspConfig { window: 5, prominence_fraction: frac, ..Default::default() };
        let n = detect_extrema(&series(t, y), &cfg).iter().filter(|e| e.kind == ExtremumKind::Maxima).count();
        prop_assert_eq!(n, if frac < 0.5 { 2 } else { 1 });
    }
}
