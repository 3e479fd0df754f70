//! Rate and plateau statistics of error curves.

use std::ops::Range;

use thiserror::Error;

/// Minimum number of points a rate fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {points} points in the fit window, need {MIN_FIT_POINTS}")]
    InsufficientData { points: usize },
    #[error("window {start}..{end} exceeds the series length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error("non-positive or non-finite value at index {index}")]
    NonPositive { index: usize },
}

/// Least-squares fit of `log10 e_t = a + b t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// Slope `b` of the log10 error per iteration; negative means decay.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
}

pub fn fit_linear_rate(series: &[f64], window: Range<usize>) -> Result<LinearFit, FitError> {
    if window.end > series.len() || window.start > window.end {
        return Err(FitError::Window { start: window.start, end: window.end, len: series.len() });
    }
    let points = window.len();
    if points < MIN_FIT_POINTS {
        return Err(FitError::InsufficientData { points });
    }
    let mut logs = Vec::with_capacity(points);
    for t in window.clone() {
        let v = series[t];
        if !(v > 0.0 && v.is_finite()) {
            return Err(FitError::NonPositive { index: t });
        }
        logs.push(v.log10());
    }
    let n = points as f64;
    let ts: Vec<f64> = window.clone().map(|t| t as f64).collect();
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = logs.iter().sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(&logs) {
        sty += (t - t_mean) * (y - y_mean);
        stt += (t - t_mean).powi(2);
    }
    let rate = sty / stt;
    let intercept = y_mean - rate * t_mean;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(&logs) {
        ss_res += (y - intercept - rate * t).powi(2);
        ss_tot += (y - y_mean).powi(2);
    }
    // A constant series (up to rounding of the mean) is fitted exactly by a flat line.
    let r_squared = if ss_tot > 1e-24 * n * (1.0 + y_mean * y_mean) { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LinearFit { rate, intercept, r_squared, window: (window.start, window.end) })
}

/// Mean of the final `fraction` of the series (at least one point).
pub fn plateau_level(series: &[f64], fraction: f64) -> f64 {
    let tail = tail_len(series.len(), fraction);
    series[series.len() - tail..].iter().sum::<f64>() / tail as f64
}

pub(crate) fn tail_len(len: usize, fraction: f64) -> usize {
    ((len as f64 * fraction).round() as usize).clamp(1, len.max(1))
}

/// Descent phase: from `t = 0` up to the first point within `factor` times the plateau.
pub fn descent_window(series: &[f64], plateau_fraction: f64, factor: f64) -> Range<usize> {
    if series.is_empty() {
        return 0..0;
    }
    let plateau = plateau_level(series, plateau_fraction);
    let end = series
        .iter()
        .position(|&v| v <= factor * plateau)
        .unwrap_or(series.len());
    0..end
}

/// Fit over the automatically detected descent window.
pub fn fit_descent(series: &[f64], plateau_fraction: f64, factor: f64) -> Result<LinearFit, FitError> {
    fit_linear_rate(series, descent_window(series, plateau_fraction, factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_series_has_zero_rate() {
        let fit = fit_linear_rate(&[3.0; 20], 0..20).unwrap();
        assert!(fit.rate.abs() < 1e-15);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn short_window_is_rejected() {
        let s = vec![1.0; 50];
        assert_eq!(fit_linear_rate(&s, 0..9), Err(FitError::InsufficientData { points: 9 }));
        assert!(fit_linear_rate(&s, 0..10).is_ok());
        assert!(matches!(fit_linear_rate(&s, 45..60), Err(FitError::Window { .. })));
        let mut z = s.clone();
        z[3] = 0.0;
        assert_eq!(fit_linear_rate(&z, 0..10), Err(FitError::NonPositive { index: 3 }));
    }

    #[test]
    fn descent_stops_near_plateau() {
        let s: Vec<f64> = (0..200).map(|t| 0.9f64.powi(t) + 1e-3).collect();
        let w = descent_window(&s, 0.1, 2.0);
        // 0.9^t <= 1e-3 first at t = 66
        assert_eq!(w, 0..66);
        let fit = fit_descent(&s, 0.1, 2.0).unwrap();
        assert!(fit.rate < 0.0);
        assert!(fit.r_squared > 0.95);
    }

    #[test]
    fn plateau_uses_final_fraction() {
        let s: Vec<f64> = (0..100).map(|t| t as f64).collect();
        assert_eq!(plateau_level(&s, 0.1), 94.5);
        assert_eq!(plateau_level(&s[..1], 0.1), 0.0);
    }

    proptest! {
        #[test]
        fn recovers_exact_geometric_rate(a in -3.0f64..3.0, b in -0.05f64..0.05, len in 10usize..300) {
            let s: Vec<f64> = (0..len).map(|t| 10f64.powf(a + b * t as f64)).collect();
            let fit = fit_linear_rate(&s, 0..len).unwrap();
            prop_assert!((fit.rate - b).abs() < 1e-10);
            prop_assert!((fit.intercept - a).abs() < 1e-8);
            if b.abs() > 1e-6 {
                prop_assert!(fit.r_squared > 1.0 - 1e-9);
            }
        }
    }
}
