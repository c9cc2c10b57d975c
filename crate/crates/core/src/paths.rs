//! Fractional Brownian motion and its running integral on uniform grids.
//!
//! Two samplers are provided. [`ExactSampler`] factorizes the dense
//! covariance of the grid values and is the reference for small grids.
//! [`FastSampler`] embeds the fractional Gaussian noise autocovariance in a
//! circulant matrix, draws the increments with one FFT and re-anchors the
//! cumulative sum at coordinate 0, so two-sided paths keep the correct
//! dependence between the half-axes.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::rng::RandomnessSpec;

/// Largest grid accepted by the dense sampler.
pub const EXACT_SAMPLER_MAX_COUNT: usize = 4096;
/// Relative tolerance on negative circulant eigenvalues.
pub const EMBEDDING_TOLERANCE: f64 = 1e-9;
/// Maximum number of embedding doublings before giving up.
pub const EMBEDDING_MAX_DOUBLINGS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstIndex(f64);

impl HurstIndex {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(HurstIndex(value))
        } else {
            Err(LabError::InvalidHurst(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The exponent 2H appearing in every covariance formula.
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }
}

impl TryFrom<f64> for HurstIndex {
    type Error = LabError;
    fn try_from(v: f64) -> Result<Self> {
        HurstIndex::new(v)
    }
}

impl From<HurstIndex> for f64 {
    fn from(h: HurstIndex) -> f64 {
        h.0
    }
}

/// Uniform grid `left + i * spacing`, `i = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    left: f64,
    spacing: f64,
    count: usize,
}

impl SampleGrid {
    pub fn new(left: f64, spacing: f64, count: usize) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(LabError::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if !left.is_finite() {
            return Err(LabError::InvalidGrid(format!("left endpoint not finite: {left}")));
        }
        if count < 2 {
            return Err(LabError::InvalidGrid(format!("need at least 2 points, got {count}")));
        }
        Ok(SampleGrid { left, spacing, count })
    }

    /// Grid with `below` points left of 0, the anchor, and `above` points
    /// right of 0.
    pub fn anchored(below: usize, above: usize, spacing: f64) -> Result<Self> {
        SampleGrid::new(-(below as f64) * spacing, spacing, below + above + 1)
    }

    /// Symmetric grid on `[-half_width, half_width]` with the given spacing.
    /// `half_width / spacing` must be (numerically) an integer.
    pub fn symmetric(half_width: f64, spacing: f64) -> Result<Self> {
        let k = (half_width / spacing).round();
        if (k * spacing - half_width).abs() > 1e-9 * half_width.abs().max(spacing) {
            return Err(LabError::InvalidGrid(format!(
                "half width {half_width} is not a multiple of spacing {spacing}"
            )));
        }
        SampleGrid::anchored(k as usize, k as usize, spacing)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn right(&self) -> f64 {
        self.coordinate(self.count - 1)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        self.left + i as f64 * self.spacing
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coordinate(i)).collect()
    }

    /// Index whose coordinate is exactly 0, if any.
    pub fn anchor_index(&self) -> Option<usize> {
        let k = (-self.left / self.spacing).round();
        if k < 0.0 || k >= self.count as f64 {
            return None;
        }
        let k = k as usize;
        (self.coordinate(k) == 0.0).then_some(k)
    }

    pub fn require_anchor(&self) -> Result<usize> {
        self.anchor_index()
            .ok_or(LabError::NotAnchored { left: self.left, spacing: self.spacing })
    }

    /// Index of the grid point closest to `x` (clamped to the grid).
    pub fn nearest_index(&self, x: f64) -> usize {
        let k = ((x - self.left) / self.spacing).round();
        k.clamp(0.0, (self.count - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Fbm,
    Integrated,
    Potential,
    Velocity,
}

/// A process sample on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    grid: SampleGrid,
    values: Vec<f64>,
    kind: PathKind,
    hurst: Option<HurstIndex>,
}

impl GridPath {
    pub fn new(
        grid: SampleGrid,
        values: Vec<f64>,
        kind: PathKind,
        hurst: Option<HurstIndex>,
    ) -> Result<Self> {
        if values.len() != grid.count() {
            return Err(invalid(
                "values",
                format!("length {} does not match grid count {}", values.len(), grid.count()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite entry at index {i}")));
        }
        if matches!(kind, PathKind::Fbm | PathKind::Integrated) {
            let a = grid.require_anchor()?;
            if values[a] != 0.0 {
                return Err(invalid("values", format!("value at anchor is {} not 0", values[a])));
            }
        }
        Ok(GridPath { grid, values, kind, hurst })
    }

    /// A deterministic velocity profile `f(x)` sampled on the grid.
    pub fn from_fn(grid: SampleGrid, kind: PathKind, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.coordinates().into_iter().map(f).collect();
        GridPath::new(grid, values, kind, None)
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn hurst(&self) -> Option<HurstIndex> {
        self.hurst
    }

    /// `coordinate,value` table; `{}` on `f64` is the shortest
    /// representation that parses back to the same bits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "coordinate,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.coordinate(i), v)?;
        }
        Ok(())
    }
}

/// Parse a two-column numeric CSV with a header line.
pub fn read_csv_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| invalid("csv", format!("line {}: malformed `{line}`", lineno + 1)))
        };
        xs.push(parse(parts.next())?);
        ys.push(parse(parts.next())?);
    }
    Ok((xs, ys))
}

pub fn fbm_covariance(h: HurstIndex, x: f64, y: f64) -> f64 {
    let a = h.two_h();
    0.5 * (x.abs().powf(a) + y.abs().powf(a) - (x - y).abs().powf(a))
}

/// Covariance of grid increments of fBm at the given lag.
pub fn fgn_autocovariance(h: HurstIndex, lag: i64, spacing: f64) -> f64 {
    let a = h.two_h();
    let k = lag.unsigned_abs() as f64;
    let kp = (k + 1.0).powf(a);
    let km = (k - 1.0).abs().powf(a);
    spacing.powf(a) * 0.5 * (kp - 2.0 * k.powf(a) + km)
}

// g' = |x|^{2H}, G' = g
fn first_antiderivative(a: f64, x: f64) -> f64 {
    x.signum() * x.abs().powf(a + 1.0) / (a + 1.0)
}

fn second_antiderivative(a: f64, x: f64) -> f64 {
    x.abs().powf(a + 2.0) / ((a + 1.0) * (a + 2.0))
}

/// `E I_H(s) I_H(t)` for the signed running integral `I_H(x) = ∫_0^x w_H`.
pub fn ifbm_covariance(h: HurstIndex, s: f64, t: f64) -> f64 {
    let a = h.two_h();
    let g = |x| first_antiderivative(a, x);
    let gg = |x| second_antiderivative(a, x);
    0.5 * (t * g(s) + s * g(t) - gg(s) - gg(t) + gg(s - t))
}

/// Cross covariance `E w_H(x) I_H(t)`.
pub fn fbm_ifbm_covariance(h: HurstIndex, x: f64, t: f64) -> f64 {
    let a = h.two_h();
    let g = |y| first_antiderivative(a, y);
    0.5 * (t * x.abs().powf(a) + g(t) - g(x) + g(x - t))
}

/// Dense lower Cholesky factor (row-major), reporting the failing pivot.
pub(crate) fn cholesky(n: usize, m: &[f64]) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = m[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) {
            return Err(LabError::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in j + 1..n {
            let mut s = m[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn lower_mul(n: usize, l: &[f64], z: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let row = &l[i * n..i * n + i + 1];
            row.iter().zip(z).map(|(a, b)| a * b).sum()
        })
        .collect()
}

/// Dense Cholesky sampler for fBm on a small anchored grid.
#[derive(Debug, Clone)]
pub struct ExactSampler {
    hurst: HurstIndex,
    grid: SampleGrid,
    anchor: usize,
    factor: Vec<f64>,
}

impl ExactSampler {
    pub fn new(hurst: HurstIndex, grid: SampleGrid) -> Result<Self> {
        if grid.count() > EXACT_SAMPLER_MAX_COUNT {
            return Err(invalid(
                "grid",
                format!("{} points exceed the dense limit {EXACT_SAMPLER_MAX_COUNT}", grid.count()),
            ));
        }
        let anchor = grid.require_anchor()?;
        let xs: Vec<f64> =
            (0..grid.count()).filter(|&i| i != anchor).map(|i| grid.coordinate(i)).collect();
        let n = xs.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let c = fbm_covariance(hurst, xs[i], xs[j]);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let factor = cholesky(n, &cov)?;
        Ok(ExactSampler { hurst, grid, anchor, factor })
    }

    pub fn sample(&self, rand: RandomnessSpec) -> GridPath {
        let n = self.grid.count() - 1;
        let z = rand.normals(n);
        let x = lower_mul(n, &self.factor, &z);
        let mut values = Vec::with_capacity(n + 1);
        values.extend_from_slice(&x[..self.anchor]);
        values.push(0.0);
        values.extend_from_slice(&x[self.anchor..]);
        GridPath { grid: self.grid, values, kind: PathKind::Fbm, hurst: Some(self.hurst) }
    }
}

/// Circulant-embedding sampler; `O(n log n)` per path.
#[derive(Clone)]
pub struct FastSampler {
    hurst: HurstIndex,
    grid: SampleGrid,
    anchor: usize,
    sqrt_eigenvalues: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FastSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FastSampler")
            .field("hurst", &self.hurst)
            .field("grid", &self.grid)
            .field("embedding", &self.sqrt_eigenvalues.len())
            .finish()
    }
}

impl FastSampler {
    pub fn new(hurst: HurstIndex, grid: SampleGrid) -> Result<Self> {
        let anchor = grid.require_anchor()?;
        let increments = grid.count() - 1;
        let mut size = 2 * increments.next_power_of_two();
        let mut planner = FftPlanner::new();
        let mut last = (0.0, 0.0);
        for doubling in 0..=EMBEDDING_MAX_DOUBLINGS {
            let half = size / 2;
            let mut row: Vec<Complex<f64>> = (0..size)
                .map(|j| {
                    let lag = j.min(size - j) as i64;
                    let _ = half;
                    Complex::new(fgn_autocovariance(hurst, lag, grid.spacing()), 0.0)
                })
                .collect();
            planner.plan_fft_forward(size).process(&mut row);
            let max = row.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
            let min = row.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
            if min >= -EMBEDDING_TOLERANCE * max {
                let sqrt_eigenvalues =
                    row.iter().map(|c| (c.re.max(0.0) / size as f64).sqrt()).collect();
                return Ok(FastSampler {
                    hurst,
                    grid,
                    anchor,
                    sqrt_eigenvalues,
                    fft: planner.plan_fft_forward(size),
                });
            }
            last = (min, max);
            if doubling < EMBEDDING_MAX_DOUBLINGS {
                size *= 2;
            }
        }
        Err(LabError::EmbeddingFailed { min: last.0, max: last.1, doublings: EMBEDDING_MAX_DOUBLINGS })
    }

    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    /// Raw fractional Gaussian noise (grid increments) for one replica.
    pub fn increments(&self, rand: RandomnessSpec) -> Vec<f64> {
        let m = self.sqrt_eigenvalues.len();
        let z = rand.normals(2 * m);
        let mut buf: Vec<Complex<f64>> = self
            .sqrt_eigenvalues
            .iter()
            .enumerate()
            .map(|(k, s)| Complex::new(s * z[2 * k], s * z[2 * k + 1]))
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(self.grid.count() - 1);
        buf.into_iter().map(|c| c.re).collect()
    }

    pub fn sample(&self, rand: RandomnessSpec) -> GridPath {
        let inc = self.increments(rand);
        let mut values = Vec::with_capacity(inc.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for d in inc {
            acc += d;
            values.push(acc);
        }
        let base = values[self.anchor];
        for v in &mut values {
            *v -= base;
        }
        GridPath { grid: self.grid, values, kind: PathKind::Fbm, hurst: Some(self.hurst) }
    }
}

pub fn sample_fbm_exact(h: HurstIndex, grid: SampleGrid, rand: RandomnessSpec) -> Result<GridPath> {
    Ok(ExactSampler::new(h, grid)?.sample(rand))
}

pub fn sample_fbm_fast(h: HurstIndex, grid: SampleGrid, rand: RandomnessSpec) -> Result<GridPath> {
    Ok(FastSampler::new(h, grid)?.sample(rand))
}

/// Signed trapezoidal running integral anchored at index `anchor`.
pub fn cumulative_trapezoid(values: &[f64], spacing: f64, anchor: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in anchor + 1..values.len() {
        out[i] = out[i - 1] + 0.5 * spacing * (values[i - 1] + values[i]);
    }
    for i in (0..anchor).rev() {
        out[i] = out[i + 1] - 0.5 * spacing * (values[i] + values[i + 1]);
    }
    out
}

/// `I_H(x) = ∫_0^x w_H(s) ds` by the trapezoidal rule.
pub fn integrate_path(path: &GridPath) -> Result<GridPath> {
    if path.kind != PathKind::Fbm {
        return Err(invalid("path", format!("expected an fbm path, got {:?}", path.kind)));
    }
    let anchor = path.grid.require_anchor()?;
    let values = cumulative_trapezoid(&path.values, path.grid.spacing(), anchor);
    Ok(GridPath { grid: path.grid, values, kind: PathKind::Integrated, hurst: path.hurst })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn hurst_rejects_boundary() {
        assert!(HurstIndex::new(0.0).is_err());
        assert!(HurstIndex::new(1.0).is_err());
        assert!(HurstIndex::new(f64::NAN).is_err());
        assert!(HurstIndex::new(0.5).is_ok());
    }

    #[test]
    fn grid_validation_and_anchor() {
        assert!(SampleGrid::new(0.0, 0.0, 4).is_err());
        assert!(SampleGrid::new(0.0, 1.0, 1).is_err());
        let g = SampleGrid::anchored(3, 5, 0.1).unwrap();
        assert_eq!(g.anchor_index(), Some(3));
        assert_eq!(g.coordinate(3), 0.0);
        assert_eq!(SampleGrid::new(0.05, 0.1, 4).unwrap().anchor_index(), None);
        let s = SampleGrid::symmetric(2.0, 0.125).unwrap();
        assert_eq!(s.count(), 33);
        assert_eq!(s.coordinate(24), 1.0);
    }

    #[test]
    fn fbm_covariance_examples() {
        assert!((fbm_covariance(h(0.5), 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(h(0.5), 1.0, 2.0) - 1.0).abs() < 1e-15);
        let want = 0.5 * 2f64.powf(1.5);
        assert!((fbm_covariance(h(0.75), 1.0, 2.0) - want).abs() < 1e-15);
        assert!((want - std::f64::consts::SQRT_2).abs() < 1e-15);
        // two-sided Brownian motion: independent half-axes
        assert!(fbm_covariance(h(0.5), -1.0, 2.0).abs() < 1e-15);
    }

    #[test]
    fn fgn_examples() {
        assert!((fgn_autocovariance(h(0.5), 0, 1.0) - 1.0).abs() < 1e-15);
        assert!(fgn_autocovariance(h(0.5), 3, 1.0).abs() < 1e-15);
        let want = 0.5 * (2f64.powf(1.4) - 2.0);
        assert!((fgn_autocovariance(h(0.7), 1, 1.0) - want).abs() < 1e-15);
        assert!((want - 0.319_508).abs() < 1e-6);
        assert_eq!(fgn_autocovariance(h(0.7), -2, 0.5), fgn_autocovariance(h(0.7), 2, 0.5));
    }

    #[test]
    fn ifbm_covariance_examples() {
        assert_eq!(ifbm_covariance(h(0.3), 0.0, 1.7), 0.0);
        assert!((ifbm_covariance(h(0.5), 1.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        // Brownian half-axes are independent
        assert!(ifbm_covariance(h(0.5), -1.0, 1.0).abs() < 1e-15);
    }

    #[test]
    fn count_two_path() {
        let g = SampleGrid::new(0.0, 1.0, 2).unwrap();
        let p = sample_fbm_exact(h(0.3), g, RandomnessSpec::new(1, 0)).unwrap();
        assert_eq!(p.values()[0], 0.0);
        // unit variance at x = 1: the single factor entry is 1
        let z = RandomnessSpec::new(1, 0).normals(1)[0];
        assert_eq!(p.values()[1], z);
    }

    #[test]
    fn exact_sampler_requires_anchor() {
        let g = SampleGrid::new(0.5, 1.0, 4).unwrap();
        assert!(matches!(ExactSampler::new(h(0.5), g), Err(LabError::NotAnchored { .. })));
    }

    #[test]
    fn cholesky_reports_pivot() {
        let m = [1.0, 1.0, 1.0, 1.0];
        match cholesky(2, &m) {
            Err(LabError::NotPositiveDefinite { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fast_sampler_anchors_two_sided() {
        let g = SampleGrid::anchored(40, 23, 0.25).unwrap();
        let p = sample_fbm_fast(h(0.3), g, RandomnessSpec::new(3, 9)).unwrap();
        assert_eq!(p.values()[40], 0.0);
        let q = sample_fbm_fast(h(0.3), g, RandomnessSpec::new(3, 9)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn integrate_examples() {
        let g = SampleGrid::new(0.0, 1.0, 3).unwrap();
        let zero = GridPath::new(g, vec![0.0; 3], PathKind::Fbm, None).unwrap();
        assert_eq!(integrate_path(&zero).unwrap().values(), &[0.0, 0.0, 0.0]);
        let line = GridPath::new(g, vec![0.0, 1.0, 2.0], PathKind::Fbm, None).unwrap();
        assert_eq!(integrate_path(&line).unwrap().values(), &[0.0, 0.5, 2.0]);
        // negative side: I(-1) = -∫_{-1}^0 x dx = 1/2
        let g2 = SampleGrid::anchored(1, 1, 1.0).unwrap();
        let line2 = GridPath::new(g2, vec![-1.0, 0.0, 1.0], PathKind::Fbm, None).unwrap();
        assert_eq!(integrate_path(&line2).unwrap().values(), &[0.5, 0.0, 0.5]);
        assert!(integrate_path(&integrate_path(&line).unwrap()).is_err());
    }

    #[test]
    fn path_rejects_bad_values() {
        let g = SampleGrid::new(0.0, 1.0, 3).unwrap();
        assert!(GridPath::new(g, vec![0.0, f64::NAN, 1.0], PathKind::Velocity, None).is_err());
        assert!(GridPath::new(g, vec![1.0, 0.0, 1.0], PathKind::Fbm, None).is_err());
        assert!(GridPath::new(g, vec![0.0; 2], PathKind::Velocity, None).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = SampleGrid::anchored(4, 4, 0.1).unwrap();
        let p = sample_fbm_fast(h(0.7), g, RandomnessSpec::new(11, 0)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("coordinate,value\n"));
        let (xs, ys) = read_csv_columns(&text).unwrap();
        assert_eq!(xs, g.coordinates());
        assert_eq!(ys, p.values());
    }
}
