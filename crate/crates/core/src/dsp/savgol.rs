//! Savitzky-Golay smoothing.
//!
//! Weights come from Gram polynomials, which give the least-squares
//! polynomial smoother directly without forming or inverting a normal matrix.
//! Edge samples are evaluated from a polynomial fitted to the first (or last)
//! full window rather than from padded data.

use super::{DspError, Series};

/// `a * (a-1) * ... * (a-b+1)`, with `gen_factorial(a, 0) == 1`.
fn gen_factorial(a: f64, b: usize) -> f64 {
    (0..b).fold(1.0, |acc, j| acc * (a - j as f64))
}

/// Values of the Gram polynomials `P_0..=P_order` over `2*half + 1` points at
/// abscissa `x`.
fn gram_values(half: usize, order: usize, x: f64) -> Vec<f64> {
    let m = half as f64;
    let mut p = Vec::with_capacity(order + 1);
    p.push(1.0);
    if order >= 1 {
        p.push(x / m);
    }
    for k in 2..=order {
        let kf = k as f64;
        let denom = kf * (2.0 * m - kf + 1.0);
        let a = 2.0 * (2.0 * kf - 1.0) / denom;
        let b = (kf - 1.0) * (2.0 * m + kf) / denom;
        p.push(a * x * p[k - 1] - b * p[k - 2]);
    }
    p
}

fn check(window: usize, polyorder: usize) -> Result<usize, DspError> {
    if window == 0 || window % 2 == 0 {
        return Err(DspError::InvalidWindow(window));
    }
    if polyorder >= window {
        return Err(DspError::InvalidOrder { window, polyorder });
    }
    Ok(window / 2)
}

/// Weights that evaluate, at window offset `eval_at` (in `-half..=half`), the
/// least-squares polynomial of degree `polyorder` fitted to the window.
pub fn savgol_weights_at(window: usize, polyorder: usize, eval_at: i64) -> Result<Vec<f64>, DspError> {
    let half = check(window, polyorder)?;
    if half == 0 {
        return Ok(vec![1.0]);
    }
    let m2 = 2.0 * half as f64;
    let at = gram_values(half, polyorder, eval_at as f64);
    let scale: Vec<f64> = (0..=polyorder)
        .map(|k| (2 * k + 1) as f64 * gen_factorial(m2, k) / gen_factorial(m2 + k as f64 + 1.0, k + 1))
        .collect();
    let weights = (-(half as i64)..=half as i64)
        .map(|i| {
            let p = gram_values(half, polyorder, i as f64);
            (0..=polyorder).map(|k| scale[k] * p[k] * at[k]).sum()
        })
        .collect();
    Ok(weights)
}

/// Center-row smoothing weights.
pub fn savgol_weights(window: usize, polyorder: usize) -> Result<Vec<f64>, DspError> {
    savgol_weights_at(window, polyorder, 0)
}

/// Smooths `y` sample-by-sample (the abscissa is treated as index-regular).
pub fn savgol_filter(y: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>, DspError> {
    let half = check(window, polyorder)?;
    let n = y.len();
    if n < window {
        return Err(DspError::SeriesTooShort { len: n, window });
    }
    let center = savgol_weights(window, polyorder)?;
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate().take(n - half).skip(half) {
        let seg = &y[i - half..=i + half];
        *slot = seg.iter().zip(&center).map(|(a, b)| a * b).sum();
    }
    for j in 0..half {
        let offset = j as i64 - half as i64;
        let w = savgol_weights_at(window, polyorder, offset)?;
        out[j] = y[..window].iter().zip(&w).map(|(a, b)| a * b).sum();
        // the mirrored offset on the right edge uses the same weights reversed
        out[n - 1 - j] = y[n - window..].iter().rev().zip(&w).map(|(a, b)| a * b).sum();
    }
    Ok(out)
}

/// Smooths a series; `t` and `unit` are carried through unchanged.
pub fn smooth(series: &Series, window: usize, polyorder: usize) -> Result<Series, DspError> {
    let y = savgol_filter(&series.y, window, polyorder)?;
    Ok(Series { t: series.t.clone(), y, unit: series.unit.clone() })
}
