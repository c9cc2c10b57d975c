//! Box-counting dimension of point sets on a line, and the log-log fit
//! shared with the persistence-exponent estimates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::stats::ols;

/// Least-squares fit of `log value` against `log(1/scale)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub pairs: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    /// Slopes refitted on the coarse and fine halves of the ladder.
    pub coarse_half_slope: Option<f64>,
    pub fine_half_slope: Option<f64>,
    /// Standard error of the slope propagated from per-point errors of
    /// `log value`, when those are known.
    pub slope_se: Option<f64>,
}

impl ScalingFit {
    pub fn fit(pairs: Vec<(f64, f64)>) -> Result<Self> {
        Self::fit_with_errors(pairs, None)
    }

    /// `log_errors[i]` is the standard error of `ln value_i`.
    pub fn fit_with_errors(pairs: Vec<(f64, f64)>, log_errors: Option<&[f64]>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(LabError::DegenerateFit(format!("{} points", pairs.len())));
        }
        if pairs.windows(2).any(|w| !(w[0].0 > w[1].0)) {
            return Err(invalid("pairs", "scales must be strictly decreasing"));
        }
        if pairs.iter().any(|&(s, v)| !(s > 0.0 && v > 0.0 && v.is_finite())) {
            return Err(invalid("pairs", "scales and values must be positive"));
        }
        let x: Vec<f64> = pairs.iter().map(|p| (1.0 / p.0).ln()).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
        let (slope, intercept) =
            ols(&x, &y).ok_or_else(|| LabError::DegenerateFit("collinear abscissas".into()))?;
        let max_residual =
            x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).abs()).fold(0.0, f64::max);
        let half = pairs.len() / 2;
        let (coarse_half_slope, fine_half_slope) = if half >= 2 {
            (
                ols(&x[..half], &y[..half]).map(|f| f.0),
                ols(&x[pairs.len() - half..], &y[pairs.len() - half..]).map(|f| f.0),
            )
        } else {
            (None, None)
        };
        let slope_se = log_errors.map(|e| {
            let n = x.len() as f64;
            let mx = x.iter().sum::<f64>() / n;
            let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
            x.iter().zip(e).map(|(v, s)| ((v - mx) / sxx * s).powi(2)).sum::<f64>().sqrt()
        });
        Ok(ScalingFit {
            pairs,
            slope,
            intercept,
            max_residual,
            coarse_half_slope,
            fine_half_slope,
            slope_se,
        })
    }

    /// Difference between the fine-half and coarse-half slopes.
    pub fn window_discrepancy(&self) -> Option<f64> {
        Some(self.fine_half_slope? - self.coarse_half_slope?)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, value_name: &str) -> Result<()> {
        writeln!(out, "scale,{value_name}")?;
        for (s, v) in &self.pairs {
            writeln!(out, "{s},{v}")?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
        })
    }
}

/// Number of occupied cells of width `scale` partitioning `window`, with
/// cells aligned at the window's left end.
pub fn box_count(points: &[f64], scale: f64, window: (f64, f64)) -> Result<usize> {
    if !(scale > 0.0) {
        return Err(invalid("scale", format!("must be positive, got {scale}")));
    }
    if !(window.1 > window.0) {
        return Err(invalid("window", "must have positive length"));
    }
    if points.is_empty() {
        return Ok(0);
    }
    let cells = (((window.1 - window.0) / scale).ceil() as usize).max(1);
    let mut occupied: Vec<usize> = points
        .iter()
        .map(|&x| (((x - window.0) / scale).floor().max(0.0) as usize).min(cells - 1))
        .collect();
    occupied.sort_unstable();
    occupied.dedup();
    Ok(occupied.len())
}

/// Dyadic ladder `len * 2^-j`, `j = 4..=10`, trimmed to the scales whose
/// counts lie in `[4, points / 4]`.
pub fn default_ladder(points: &[f64], window: (f64, f64)) -> Vec<f64> {
    let len = window.1 - window.0;
    let upper = points.len() / 4;
    (4..=10)
        .map(|j| len * 0.5f64.powi(j))
        .filter(|&s| {
            let n = box_count(points, s, window).unwrap_or(0);
            n >= 4 && n <= upper
        })
        .collect()
}

/// Slope of `log N(eps)` against `log(1/eps)` over the ladder.
pub fn dimension_estimate(points: &[f64], window: (f64, f64), ladder: &[f64]) -> Result<ScalingFit> {
    if ladder.len() < 4 {
        return Err(LabError::DegenerateFit(format!("{} scales, need at least 4", ladder.len())));
    }
    let mut ladder = ladder.to_vec();
    ladder.sort_by(|a, b| b.total_cmp(a));
    let mut pairs = Vec::with_capacity(ladder.len());
    for &s in &ladder {
        let n = box_count(points, s, window)?;
        if n == 0 {
            return Err(LabError::DegenerateFit(format!("no occupied cells at scale {s}")));
        }
        pairs.push((s, n as f64));
    }
    let mut counts: Vec<u64> = pairs.iter().map(|p| p.1 as u64).collect();
    counts.dedup();
    if counts.len() < 2 {
        return Err(LabError::DegenerateFit("fewer than 2 distinct counts".into()));
    }
    ScalingFit::fit(pairs)
}
