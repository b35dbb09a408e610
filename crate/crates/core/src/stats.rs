//! Trend tests for distance sequences along `α_n → α₀`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::Statistics;

use crate::dynamics::ls_slope;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Least-squares slope of `ln d_n` against `n`, one per series.
    pub slopes: Vec<f64>,
    pub mean_slope: f64,
    /// One-sided 95% upper confidence bound on the slope.
    pub upper_bound: f64,
    /// `d_last / d_first` per series.
    pub ratios: Vec<f64>,
    pub decreasing: bool,
    /// Every series ends below `d_first / 5`.
    pub shrinks: bool,
}

impl TrendReport {
    pub fn passed(&self) -> bool {
        self.decreasing && self.shrinks
    }
}

fn log_points(series: &[f64]) -> Vec<(f64, f64)> {
    let top = series.iter().copied().fold(0.0, f64::max);
    let floor = if top > 0.0 { 1e-12 * top } else { f64::MIN_POSITIVE };
    series
        .iter()
        .enumerate()
        .map(|(n, d)| ((n + 1) as f64, d.max(floor).ln()))
        .collect()
}

/// Slope test on `ln d` over the index `n = 1, 2, ...`, pooled across series.
///
/// With several series the per-series slopes are treated as a sample (Student t,
/// `k - 1` degrees of freedom); a single series uses the regression standard error.
pub fn trend_test(series: &[Vec<f64>]) -> Result<TrendReport> {
    if series.is_empty() || series.iter().any(|s| s.len() < 3) {
        return Err(Error::Empty("trend test needs series of length >= 3"));
    }
    let slopes: Vec<f64> = series.iter().map(|s| ls_slope(&log_points(s))).collect();
    let ratios: Vec<f64> = series
        .iter()
        .map(|s| {
            let (a, b) = (s[0], s[s.len() - 1]);
            if a == 0.0 {
                if b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                b / a
            }
        })
        .collect();
    let mean_slope = slopes.iter().copied().mean();
    let (se, df) = if slopes.len() >= 2 {
        let sd = slopes.iter().copied().std_dev();
        (sd / (slopes.len() as f64).sqrt(), (slopes.len() - 1) as f64)
    } else {
        let pts = log_points(&series[0]);
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).mean();
        let my = pts.iter().map(|p| p.1).mean();
        let b = slopes[0];
        let sse: f64 = pts.iter().map(|p| (p.1 - my - b * (p.0 - mx)).powi(2)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        ((sse / (n - 2.0) / sxx).sqrt(), n - 2.0)
    };
    let crit = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Format(e.to_string()))?
        .inverse_cdf(0.95);
    let upper_bound = mean_slope + crit * se;
    Ok(TrendReport {
        decreasing: upper_bound < 0.0,
        shrinks: ratios.iter().all(|r| *r < 0.2),
        slopes,
        mean_slope,
        upper_bound,
        ratios,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().copied().mean();
    let sd = xs.iter().copied().std_dev();
    (m, sd / (xs.len() as f64).sqrt())
}
