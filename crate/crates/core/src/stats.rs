//! Small statistical helpers shared by the Monte-Carlo modules.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn sum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> MeanSe {
        let n = xs.len();
        assert!(n > 0, "mean of an empty sample");
        let mean = sum(xs) / n as f64;
        let ss: CompensatedSum = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { ss.value() / (n - 1) as f64 } else { 0.0 };
        MeanSe { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Indicator mean, with the binomial standard error sqrt(p(1-p)/n).
    pub fn of_indicators(hits: usize, n: usize) -> MeanSe {
        assert!(n > 0);
        let p = hits as f64 / n as f64;
        MeanSe { mean: p, se: (p * (1.0 - p) / n as f64).sqrt(), n }
    }

    /// Difference of two means computed on common random numbers; `pairs`
    /// carries the per-replica differences so the correlation is honoured.
    pub fn of_differences(a: &[f64], b: &[f64]) -> MeanSe {
        assert_eq!(a.len(), b.len());
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        MeanSe::of(&d)
    }
}

/// Empirical covariance of two equally long samples, with the standard error
/// of the covariance estimate (from the variance of centred products).
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len();
    let ma = sum(a) / n as f64;
    let mb = sum(b) / n as f64;
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let m = MeanSe::of(&prods);
    (m.mean * n as f64 / (n - 1) as f64, m.se)
}

/// Two-sample Kolmogorov–Smirnov statistic sup |F_a - F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.627_624 * ((na + nb) / (na * nb)).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = sum(x) / n as f64;
    let my = sum(y) / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).collect::<CompensatedSum>().value();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .collect::<CompensatedSum>()
        .value();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Evaluate `f` for replicas `0..n` in parallel, returning results in
/// replica order so that downstream reductions are order-independent of
/// the thread schedule.
pub fn replica_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}
