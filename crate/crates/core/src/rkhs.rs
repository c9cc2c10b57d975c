//! Finite-grid kernel space of integrated fBm.
//!
//! The covariance `Sigma_ij = E I_H(x_i) I_H(x_j)` is singular on the anchor
//! row (`I_H(0) = 0`), so all solves are carried out on the support of the
//! diagonal. Norms are `sqrt(phi' Sigma^+ phi)`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::paths::{cholesky, ifbm_covariance, lower_mul, HurstIndex, SampleGrid};
use crate::rng::RandomnessSpec;
use crate::stats::{replica_map, MeanSe};

pub const MAX_SPACE_COUNT: usize = 512;
pub const MAX_VERIFY_COUNT: usize = 64;
/// Ridge added to an indefinite factorization, relative to `trace / count`.
pub const RIDGE: f64 = 1e-12;
/// Eigenvalues below `-INDEFINITE_TOLERANCE * trace / count` are fatal.
pub const INDEFINITE_TOLERANCE: f64 = 1e-10;
/// Admissible relative residual of a solve.
pub const RANGE_TOLERANCE: f64 = 1e-6;

/// Cholesky factor of a symmetric matrix restricted to an index subset.
#[derive(Debug, Clone)]
struct Factor {
    index: Vec<usize>,
    lower: Vec<f64>,
    ridge: f64,
}

impl Factor {
    fn new(matrix: &[f64], n: usize, index: Vec<usize>, ridge: f64) -> Result<Self> {
        let m = index.len();
        let mut sub = vec![0.0; m * m];
        for (a, &i) in index.iter().enumerate() {
            for (b, &j) in index.iter().enumerate() {
                sub[a * m + b] = matrix[i * n + j];
            }
        }
        match cholesky(m, &sub) {
            Ok(lower) => Ok(Factor { index, lower, ridge: 0.0 }),
            Err(_) => {
                for a in 0..m {
                    sub[a * m + a] += ridge;
                }
                let lower = cholesky(m, &sub)?;
                Ok(Factor { index, lower, ridge })
            }
        }
    }

    fn dim(&self) -> usize {
        self.index.len()
    }

    // Solve (L L') y = b in the reduced coordinates.
    fn solve_reduced(&self, b: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..m {
            let s: f64 = (0..i).map(|k| l[i * m + k] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * m + i];
        }
        for i in (0..m).rev() {
            let s: f64 = (i + 1..m).map(|k| l[k * m + i] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * m + i];
        }
        y
    }
}

fn matvec(matrix: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| matrix[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solve `A z = b` on the factor's index set with iterative refinement;
/// entries of `z` outside the index set are zero. Returns the residual norm.
fn refined_solve(matrix: &[f64], n: usize, factor: &Factor, b: &[f64]) -> (Vec<f64>, f64) {
    let residual = |z: &[f64]| -> Vec<f64> {
        matvec(matrix, n, z).iter().zip(b).map(|(az, bi)| bi - az).collect()
    };
    let mut z = vec![0.0; n];
    for _ in 0..3 {
        let r = residual(&z);
        let rr: Vec<f64> = factor.index.iter().map(|&i| r[i]).collect();
        let dz = factor.solve_reduced(&rr);
        for (&i, d) in factor.index.iter().zip(dz) {
            z[i] += d;
        }
    }
    let r = norm2(&residual(&z));
    (z, r)
}

#[derive(Debug, Clone)]
pub struct KernelSpace {
    grid: SampleGrid,
    hurst: HurstIndex,
    covariance: Vec<f64>,
    factor: Factor,
    min_eigenvalue: f64,
}

impl KernelSpace {
    pub fn grid(&self) -> &SampleGrid {
        &self.grid
    }

    pub fn hurst(&self) -> HurstIndex {
        self.hurst
    }

    pub fn count(&self) -> usize {
        self.grid.count()
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[i * self.count() + j]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.count()).map(|j| self.covariance(j, i)).collect()
    }

    /// Whether the ridge had to be added to factor the covariance.
    pub fn regularized(&self) -> bool {
        self.factor.ridge > 0.0
    }

    pub fn ridge(&self) -> f64 {
        self.factor.ridge
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// `z` with `Sigma z = phi`, supported on the non-degenerate coordinates.
    pub fn solve(&self, phi: &[f64]) -> Result<Vec<f64>> {
        if phi.len() != self.count() {
            return Err(invalid(
                "trend",
                format!("length {} != grid count {}", phi.len(), self.count()),
            ));
        }
        let (z, residual) = refined_solve(&self.covariance, self.count(), &self.factor, phi);
        let scale = norm2(phi);
        if residual > RANGE_TOLERANCE * scale {
            return Err(LabError::OutOfRange {
                residual,
                relative: if scale > 0.0 { residual / scale } else { f64::INFINITY },
            });
        }
        Ok(z)
    }

    /// One centered Gaussian vector with covariance `Sigma`.
    pub fn sample(&self, rand: RandomnessSpec) -> Vec<f64> {
        let m = self.factor.dim();
        let x = lower_mul(m, &self.factor.lower, &rand.normals(m));
        let mut out = vec![0.0; self.count()];
        for (&i, v) in self.factor.index.iter().zip(x) {
            out[i] = v;
        }
        out
    }

    fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.grid.nearest_index(x);
        ((self.grid.coordinate(i) - x).abs() <= 1e-12 * x.abs().max(1.0)).then_some(i)
    }
}

pub fn build_space(grid: SampleGrid, h: HurstIndex) -> Result<KernelSpace> {
    let n = grid.count();
    if n > MAX_SPACE_COUNT {
        return Err(invalid(
            "grid",
            format!("{n} points exceed the dense limit {MAX_SPACE_COUNT}"),
        ));
    }
    grid.require_anchor()?;
    let xs = grid.coordinates();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let c = ifbm_covariance(h, xs[i], xs[j]);
            cov[i * n + j] = c;
            cov[j * n + i] = c;
        }
    }
    let trace: f64 = (0..n).map(|i| cov[i * n + i]).sum();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &cov));
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -INDEFINITE_TOLERANCE * trace / n as f64 {
        return Err(LabError::Indefinite(min_eigenvalue));
    }
    let support: Vec<usize> = (0..n).filter(|&i| cov[i * n + i] > 0.0).collect();
    let factor = Factor::new(&cov, n, support, RIDGE * trace / n as f64)
        .map_err(|_| LabError::Indefinite(min_eigenvalue))?;
    Ok(KernelSpace { grid, hurst: h, covariance: cov, factor, min_eigenvalue })
}

/// `sqrt(phi' Sigma^+ phi)`.
pub fn rkhs_norm(space: &KernelSpace, trend: &[f64]) -> Result<f64> {
    let z = space.solve(trend)?;
    let q: f64 = trend.iter().zip(&z).map(|(a, b)| a * b).sum();
    Ok(q.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendLabel {
    Psi,
    Phi1,
    Phi2,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFunction {
    pub label: TrendLabel,
    pub offset: f64,
    pub grid: SampleGrid,
    pub values: Vec<f64>,
    /// Set when an internal projection needed the ridge.
    pub regularized: bool,
}

impl TrendFunction {
    pub fn at(&self, x: f64) -> f64 {
        self.values[self.grid.nearest_index(x)]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "coordinate,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.coordinate(i), v)?;
        }
        Ok(())
    }
}

/// `2x^2` inside `(-1, 1)` and `2|x| - 1` on `|x| >= 1`.
pub fn psi(x: f64) -> f64 {
    if x.abs() < 1.0 {
        2.0 * x * x
    } else {
        2.0 * x.abs() - 1.0
    }
}

pub fn psi_trend(grid: SampleGrid) -> TrendFunction {
    TrendFunction {
        label: TrendLabel::Psi,
        offset: 0.0,
        grid,
        values: grid.coordinates().into_iter().map(psi).collect(),
        regularized: false,
    }
}

/// `E[eta I_H(.)]` where `eta` is the residual of `I_H(pivot)` after
/// projecting on `I_H(x)` for `x` on the far side of 0 and on the increments
/// `I_H(x) - I_H(pivot)` beyond the pivot. `sign` selects the side.
fn localizer(space: &KernelSpace, pivot: usize, sign: f64) -> Result<(Vec<f64>, bool)> {
    let g = space.grid();
    let n = space.count();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..n {
        let x = sign * g.coordinate(j);
        if !(0.0..=1.0).contains(&x) {
            let mut b = vec![0.0; n];
            b[j] = 1.0;
            if x > 1.0 {
                b[pivot] = -1.0;
            }
            basis.push(b);
        }
    }
    let m = basis.len();
    let sigma_basis: Vec<Vec<f64>> =
        basis.iter().map(|b| matvec(&space.covariance, n, b)).collect();
    let mut gram = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..=a {
            let v: f64 = basis[a].iter().zip(&sigma_basis[b]).map(|(x, y)| x * y).sum();
            gram[a * m + b] = v;
            gram[b * m + a] = v;
        }
    }
    let rhs: Vec<f64> = sigma_basis.iter().map(|s| s[pivot]).collect();
    let trace: f64 = (0..m).map(|a| gram[a * m + a]).sum();
    let factor = Factor::new(&gram, m, (0..m).collect(), RIDGE * trace / m.max(1) as f64)?;
    let (alpha, _) = refined_solve(&gram, m, &factor, &rhs);
    let mut coeff = vec![0.0; n];
    coeff[pivot] = 1.0;
    for (b, a) in basis.iter().zip(&alpha) {
        for (c, v) in coeff.iter_mut().zip(b) {
            *c -= a * v;
        }
    }
    Ok((matvec(&space.covariance, n, &coeff), factor.ridge > 0.0))
}

/// The two localizing trends: `phi1` vanishes for `x <= 0` and is constant
/// for `x >= 1`; `phi2` is its mirror image.
pub fn localizer_trends(space: &KernelSpace) -> Result<(TrendFunction, TrendFunction)> {
    let g = space.grid();
    if g.left() > -2.0 || g.right() < 2.0 {
        return Err(invalid("grid", "must cover [-2, 2]"));
    }
    let one = space.index_of(1.0).ok_or_else(|| invalid("grid", "must contain x = 1"))?;
    let minus_one = space
        .index_of(-1.0)
        .ok_or_else(|| invalid("grid", "must contain x = -1"))?;
    let (v1, r1) = localizer(space, one, 1.0)?;
    let (v2, r2) = localizer(space, minus_one, -1.0)?;
    let make = |label, values, regularized| TrendFunction {
        label,
        offset: 0.0,
        grid: *g,
        values,
        regularized,
    };
    Ok((make(TrendLabel::Phi1, v1, r1), make(TrendLabel::Phi2, v2, r2)))
}

/// `psi + (1 + a)(phi1 / phi1(1) + phi2 / phi2(-1))`, equal to `2|x| + a` on
/// `|x| >= 1`.
pub fn combined_trend(space: &KernelSpace, a: f64) -> Result<TrendFunction> {
    let (phi1, phi2) = localizer_trends(space)?;
    let g = *space.grid();
    let p1 = phi1.at(1.0);
    let p2 = phi2.at(-1.0);
    let values = g
        .coordinates()
        .iter()
        .enumerate()
        .map(|(i, &x)| psi(x) + (1.0 + a) * (phi1.values[i] / p1 + phi2.values[i] / p2))
        .collect();
    Ok(TrendFunction {
        label: TrendLabel::Combined,
        offset: a,
        grid: g,
        values,
        regularized: phi1.regularized || phi2.regularized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub p_trended: f64,
    pub p_plain: f64,
    pub se_trended: f64,
    pub se_plain: f64,
    pub norm: f64,
    pub lhs: f64,
    /// `lhs` after moving both probabilities up to 4 standard errors towards
    /// each other.
    pub lhs_min: f64,
    pub rhs: f64,
    pub pass: bool,
    pub inconclusive: bool,
    pub replicas: usize,
    pub seed: u64,
    pub level: f64,
}

impl ShiftReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is serializable")
    }
}

fn root_log(p: f64) -> f64 {
    (-p.clamp(f64::MIN_POSITIVE, 1.0).ln()).sqrt()
}

/// Monte-Carlo check that shifting by a kernel-space element moves
/// `sqrt(-log P(I + phi <= level))` by at most `||phi|| / sqrt 2`.
pub fn verify_shift_inequality(
    space: &KernelSpace,
    trend: &[f64],
    level: f64,
    replicas: usize,
    seed: u64,
) -> Result<ShiftReport> {
    if space.count() > MAX_VERIFY_COUNT {
        return Err(invalid(
            "grid",
            format!("{} points exceed the Monte-Carlo limit {MAX_VERIFY_COUNT}", space.count()),
        ));
    }
    if replicas < 100 {
        return Err(invalid("replicas", "need at least 100"));
    }
    let norm = rkhs_norm(space, trend)?;
    let base = RandomnessSpec::new(seed, 0);
    let hits = replica_map(replicas, |r| {
        let x = space.sample(base.with_replica(r));
        let plain = x.iter().all(|&v| v <= level);
        let shifted = x.iter().zip(trend).all(|(v, p)| v + p <= level);
        (plain, shifted)
    });
    let pt = MeanSe::of_indicators(hits.iter().filter(|h| h.1).count(), replicas);
    let p0 = MeanSe::of_indicators(hits.iter().filter(|h| h.0).count(), replicas);
    let lhs = (root_log(pt.mean) - root_log(p0.mean)).abs();
    let interval = |m: MeanSe| {
        let s = 4.0 * m.se;
        (root_log((m.mean + s).min(1.0)), root_log((m.mean - s).max(f64::MIN_POSITIVE)))
    };
    let (a, b) = (interval(pt), interval(p0));
    let lhs_min = (a.0 - b.1).max(b.0 - a.1).max(0.0);
    let rhs = norm / std::f64::consts::SQRT_2;
    let floor = 10.0 / replicas as f64;
    let inconclusive = pt.mean <= floor || p0.mean <= floor;
    Ok(ShiftReport {
        p_trended: pt.mean,
        p_plain: p0.mean,
        se_trended: pt.se,
        se_plain: p0.se,
        norm,
        lhs,
        lhs_min,
        rhs,
        pass: !inconclusive && lhs_min <= rhs,
        inconclusive,
        replicas,
        seed,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    fn space(hv: f64, spacing: f64) -> KernelSpace {
        build_space(SampleGrid::symmetric(2.0, spacing).unwrap(), h(hv)).unwrap()
    }

    #[test]
    fn two_point_space() {
        let g = SampleGrid::new(0.0, 1.0, 2).unwrap();
        let s = build_space(g, h(0.5)).unwrap();
        assert_eq!(s.covariance(0, 0), 0.0);
        assert_eq!(s.covariance(0, 1), 0.0);
        assert!((s.covariance(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        let z = s.solve(&[0.0, 1.0]).unwrap();
        assert_eq!(z[0], 0.0);
        assert!((z[1] - 3.0).abs() < 1e-12);
        assert!(matches!(rkhs_norm(&s, &[1.0, 1.0]), Err(LabError::OutOfRange { .. })));
    }

    #[test]
    fn build_space_limits() {
        let g = SampleGrid::anchored(300, 300, 0.01).unwrap();
        assert!(build_space(g, h(0.5)).is_err());
        let g = SampleGrid::new(0.5, 1.0, 4).unwrap();
        assert!(matches!(build_space(g, h(0.5)), Err(LabError::NotAnchored { .. })));
    }

    #[test]
    fn reproducing_property() {
        for hv in [0.3, 0.5, 0.7] {
            let s = space(hv, 0.125);
            for i in [0usize, 5, 17, 24, 32] {
                let col = s.column(i);
                let n = rkhs_norm(&s, &col).unwrap();
                let want = s.covariance(i, i).sqrt();
                assert!((n - want).abs() <= 1e-8 * want.max(1e-300), "H {hv} i {i}: {n} vs {want}");
            }
            assert_eq!(rkhs_norm(&s, &vec![0.0; s.count()]).unwrap(), 0.0);
        }
    }

    #[test]
    fn norm_grows_under_refinement() {
        let norms: Vec<f64> = [0.5, 0.25, 0.125]
            .iter()
            .map(|&sp| {
                let s = space(0.5, sp);
                rkhs_norm(&s, &psi_trend(*s.grid()).values).unwrap()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]), "{norms:?}");
    }

    #[test]
    fn psi_values() {
        assert_eq!(psi(0.5), 0.5);
        assert_eq!(psi(2.0), 3.0);
        assert_eq!(psi(-2.0), 3.0);
        assert_eq!(psi(0.0), 0.0);
    }

    #[test]
    fn localizers_vanish_and_saturate() {
        for hv in [0.3, 0.5, 0.7] {
            let s = space(hv, 0.125);
            let (p1, p2) = localizer_trends(&s).unwrap();
            let g = s.grid();
            let top = p1.at(1.0);
            assert!(top > 0.0);
            for i in 0..g.count() {
                let x = g.coordinate(i);
                if x <= 0.0 {
                    assert!(p1.values[i].abs() <= 1e-6 * top, "H {hv} x {x}: {}", p1.values[i]);
                }
                if x >= 1.0 {
                    assert!((p1.values[i] - top).abs() <= 1e-6 * top);
                }
                let mirror = g.nearest_index(-x);
                assert!((p2.values[mirror] - p1.values[i]).abs() <= 1e-9 * top);
            }
            let n = rkhs_norm(&s, &p1.values).unwrap();
            assert!((n * n - top).abs() <= 1e-6 * top, "H {hv}: {} vs {top}", n * n);
        }
    }

    #[test]
    fn combined_trend_composition() {
        for hv in [0.3, 0.5, 0.7] {
            let s = space(hv, 0.125);
            for a in [0.0, 1.0] {
                let c = combined_trend(&s, a).unwrap();
                for (i, x) in s.grid().coordinates().into_iter().enumerate() {
                    if x.abs() >= 1.0 {
                        assert!((c.values[i] - (2.0 * x.abs() + a)).abs() <= 1e-5);
                    }
                }
            }
            let c = combined_trend(&s, 0.0).unwrap();
            assert!((c.at(1.5) - 3.0).abs() <= 1e-5);
            assert!((c.at(-1.5) - 3.0).abs() <= 1e-5);
            let c = combined_trend(&s, 1.0).unwrap();
            assert!((c.at(2.0) - 5.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn localizer_needs_wide_grid() {
        let s = build_space(SampleGrid::symmetric(1.0, 0.25).unwrap(), h(0.5)).unwrap();
        assert!(localizer_trends(&s).is_err());
    }

    #[test]
    fn zero_trend_is_tight() {
        let s = space(0.5, 0.25);
        let r = verify_shift_inequality(&s, &vec![0.0; s.count()], 1.0, 2000, 1).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert_eq!(r.p_plain, r.p_trended);
        assert!(r.pass);
    }
}
