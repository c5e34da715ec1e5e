//! Finite-horizon limsup/liminf proxies and least-squares helpers shared by
//! the estimators.

use serde::Serialize;

/// Default fraction of the horizon used as the terminal window.
pub const DEFAULT_WINDOW_FRAC: f64 = 1.0 / 3.0;

/// Per-horizon values of an estimator together with its headline value and
/// the terminal window it was taken over.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorTrace {
    /// `(n, value)` rows, `n` increasing.
    pub per_n: Vec<(usize, f64)>,
    /// Headline estimate.
    pub estimate: f64,
    /// Inclusive `(lo, hi)` horizon window the headline was taken over.
    pub window: (usize, usize),
}

fn terminal_window(per_n: &[(usize, f64)], frac: f64) -> (usize, usize) {
    assert!(!per_n.is_empty(), "empty estimator trace");
    let n_max = per_n.last().unwrap().0;
    let len = ((n_max as f64 * frac).ceil() as usize).max(1);
    let lo = n_max.saturating_sub(len - 1).max(per_n[0].0);
    (lo, n_max)
}

/// Max over the terminal window: finite-horizon stand-in for a limsup.
pub fn limsup_proxy(per_n: &[(usize, f64)], frac: f64) -> EstimatorTrace {
    let window = terminal_window(per_n, frac);
    let estimate = per_n
        .iter()
        .filter(|(n, _)| *n >= window.0)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    EstimatorTrace {
        per_n: per_n.to_vec(),
        estimate,
        window,
    }
}

/// Min over the terminal window: finite-horizon stand-in for a liminf.
pub fn liminf_proxy(per_n: &[(usize, f64)], frac: f64) -> EstimatorTrace {
    let window = terminal_window(per_n, frac);
    let estimate = per_n
        .iter()
        .filter(|(n, _)| *n >= window.0)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    EstimatorTrace {
        per_n: per_n.to_vec(),
        estimate,
        window,
    }
}

/// Ordinary least squares fit `y = slope*x + intercept`; returns
/// `(slope, intercept, r_squared)`.
pub fn ols_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}
