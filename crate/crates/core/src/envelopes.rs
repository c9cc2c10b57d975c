//! Convex minorants and concave majorants of sequences indexed by `0..n`,
//! and the one-sided slope functionals built from difference quotients.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

/// Relative collinearity tolerance for hull turns.
pub const COLLINEARITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Minorant,
    Majorant,
}

/// Piecewise-linear envelope of a sequence; slopes are per index step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexEnvelope {
    pub side: Side,
    pub node_indices: Vec<usize>,
    pub node_values: Vec<f64>,
    pub segment_slopes: Vec<f64>,
}

impl ConvexEnvelope {
    pub fn len(&self) -> usize {
        self.node_indices.last().map_or(0, |&i| i + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.node_indices.is_empty()
    }

    pub fn is_node(&self, k: usize) -> bool {
        self.node_indices.binary_search(&k).is_ok()
    }

    /// Index of the segment containing `k` (the segment starting at the
    /// last node `<= k`, clamped to the final segment).
    pub fn segment_of(&self, k: usize) -> usize {
        let pos = self.node_indices.partition_point(|&i| i <= k);
        pos.saturating_sub(1).min(self.segment_slopes.len().saturating_sub(1))
    }

    pub fn evaluate(&self, k: usize) -> f64 {
        if let Ok(p) = self.node_indices.binary_search(&k) {
            return self.node_values[p];
        }
        let s = self.segment_of(k);
        self.node_values[s] + self.segment_slopes[s] * (k - self.node_indices[s]) as f64
    }

    pub fn evaluate_all(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (s, w) in self.node_indices.windows(2).enumerate() {
            for k in w[0]..w[1] {
                out.push(if k == w[0] {
                    self.node_values[s]
                } else {
                    self.node_values[s] + self.segment_slopes[s] * (k - w[0]) as f64
                });
            }
        }
        if let Some(&v) = self.node_values.last() {
            out.push(v);
        }
        out
    }

    /// `node_index,node_value,slope_after`; the last node has an empty slope.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "node_index,node_value,slope_after")?;
        for (p, (&i, &v)) in self.node_indices.iter().zip(&self.node_values).enumerate() {
            match self.segment_slopes.get(p) {
                Some(s) => writeln!(out, "{i},{v},{s}")?,
                None => writeln!(out, "{i},{v},")?,
            }
        }
        Ok(())
    }
}

fn turn(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let l = (a.0 - o.0) * (b.1 - o.1);
    let r = (a.1 - o.1) * (b.0 - o.0);
    (l - r, l.abs() + r.abs())
}

fn chain(values: &[f64], side: Side) -> Result<ConvexEnvelope> {
    if values.len() < 2 {
        return Err(invalid("values", "envelope needs at least 2 values"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(invalid("values", format!("non-finite entry at index {i}")));
    }
    let sign = match side {
        Side::Minorant => 1.0,
        Side::Majorant => -1.0,
    };
    let mut hull: Vec<usize> = Vec::with_capacity(values.len());
    for (k, &v) in values.iter().enumerate() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let (cross, mag) =
                turn((o as f64, values[o]), (a as f64, values[a]), (k as f64, v));
            // keep `a` only for a strict turn in the envelope's direction
            if sign * cross > COLLINEARITY_TOLERANCE * mag {
                break;
            }
            hull.pop();
        }
        hull.push(k);
    }
    let node_values: Vec<f64> = hull.iter().map(|&i| values[i]).collect();
    let segment_slopes = hull
        .windows(2)
        .map(|w| (values[w[1]] - values[w[0]]) / (w[1] - w[0]) as f64)
        .collect();
    Ok(ConvexEnvelope { side, node_indices: hull, node_values, segment_slopes })
}

/// Least concave majorant of `(k, values[k])`.
pub fn upper_envelope(values: &[f64]) -> Result<ConvexEnvelope> {
    chain(values, Side::Majorant)
}

/// Greatest convex minorant of `(k, values[k])`.
pub fn lower_envelope(values: &[f64]) -> Result<ConvexEnvelope> {
    chain(values, Side::Minorant)
}

/// Left and right slopes at index `k`; `left_at`/`right_at` are the
/// smallest attaining lags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopePair {
    pub index: usize,
    pub left: f64,
    pub right: f64,
    pub left_at: usize,
    pub right_at: usize,
}

impl SlopePair {
    pub fn gap(&self) -> f64 {
        self.left - self.right
    }
}

fn check_range(what: &'static str, index: usize, lo: usize, hi: usize) -> Result<()> {
    if index < lo || index > hi || lo > hi {
        return Err(LabError::IndexOutOfRange { what, index, lo, hi });
    }
    Ok(())
}

// min over p in 1..=lags of (v[k] - v[k - p]) / p
fn left_quotient(values: &[f64], k: usize, lags: usize) -> (f64, usize) {
    let mut best = (f64::INFINITY, 0);
    for p in 1..=lags {
        let q = (values[k] - values[k - p]) / p as f64;
        if q < best.0 {
            best = (q, p);
        }
    }
    best
}

// max over p in 1..=lags of (v[k + p] - v[k]) / p
fn right_quotient(values: &[f64], k: usize, lags: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for p in 1..=lags {
        let q = (values[k + p] - values[k]) / p as f64;
        if q > best.0 {
            best = (q, p);
        }
    }
    best
}

/// `min_{1<=p<=k} (v[k] - v[k-p]) / p`, defined for `1 <= k <= N`.
pub fn left_slope(values: &[f64], k: usize) -> Result<f64> {
    check_range("left slope", k, 1, values.len().saturating_sub(1))?;
    Ok(left_quotient(values, k, k).0)
}

/// `max_{1<=p<=N-k} (v[k+p] - v[k]) / p`, defined for `0 <= k <= N-1`.
pub fn right_slope(values: &[f64], k: usize) -> Result<f64> {
    check_range("right slope", k, 0, values.len().saturating_sub(2))?;
    Ok(right_quotient(values, k, values.len() - 1 - k).0)
}

/// Both one-sided slopes at an interior index.
pub fn slope_pair(values: &[f64], k: usize) -> Result<SlopePair> {
    check_range("slope pair", k, 1, values.len().saturating_sub(2))?;
    let n = values.len() - 1;
    let (left, left_at) = left_quotient(values, k, k);
    let (right, right_at) = right_quotient(values, k, n - k);
    Ok(SlopePair { index: k, left, right, left_at, right_at })
}

/// Slopes with the lag range widened to `1..=window` on both sides; the
/// sequence must extend `window` steps either side of `k`.
pub fn windowed_slope_pair(extended: &[f64], k: usize, window: usize) -> Result<SlopePair> {
    if window == 0 || k < window || k + window >= extended.len() {
        return Err(invalid(
            "extended_values",
            format!(
                "index {k} with window {window} needs indices {}..={} but length is {}",
                k as isize - window as isize,
                k + window,
                extended.len()
            ),
        ));
    }
    let (left, left_at) = left_quotient(extended, k, window);
    let (right, right_at) = right_quotient(extended, k, window);
    Ok(SlopePair { index: k, left, right, left_at, right_at })
}

/// Sum over interior indices of the positive part of `left - right`.
pub fn functional_f(values: &[f64]) -> f64 {
    if values.len() < 3 {
        return 0.0;
    }
    let n = values.len() - 1;
    let terms = (1..n).map(|k| {
        let (l, _) = left_quotient(values, k, k);
        let (r, _) = right_quotient(values, k, n - k);
        (l - r).max(0.0)
    });
    terms.collect::<crate::stats::CompensatedSum>().value()
}

/// Endpoint form of the same functional: first majorant slope minus last.
pub fn functional_f_endpoints(values: &[f64]) -> f64 {
    let n = values.len() - 1;
    right_quotient(values, 0, n).0 - left_quotient(values, n, n).0
}

/// Whether `k` is a nodal (touching) point of the concave majorant.
pub fn nodal_event(values: &[f64], k: usize) -> Result<bool> {
    let s = slope_pair(values, k)?;
    Ok(s.left - s.right > COLLINEARITY_TOLERANCE * (s.left.abs() + s.right.abs()))
}
