//! Closed-form covariances against adaptive quadrature of the fBm kernel.

use burgerlab::paths::{fbm_covariance, fbm_ifbm_covariance, ifbm_covariance, HurstIndex, SampleGrid};
use burgerlab::rkhs::build_space;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Signed `int_0^t f`, split at the kinks that fall inside the range.
fn integral<F: Fn(f64) -> f64>(f: &F, t: f64, kinks: &[f64], tol: f64) -> f64 {
    let (lo, hi) = if t >= 0.0 { (0.0, t) } else { (t, 0.0) };
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = kinks.iter().copied().filter(|&k| k > lo && k < hi).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(hi);
    let total: f64 = cuts.windows(2).map(|w| simpson(f, w[0], w[1], tol)).sum();
    if t >= 0.0 {
        total
    } else {
        -total
    }
}

fn cross_oracle(h: HurstIndex, x: f64, t: f64) -> f64 {
    integral(&|v| fbm_covariance(h, x, v), t, &[0.0, x], 1e-13)
}

fn ifbm_oracle(h: HurstIndex, s: f64, t: f64) -> f64 {
    integral(&|u| cross_oracle(h, u, t), s, &[0.0, t], 1e-12)
}

fn hurst(v: f64) -> HurstIndex {
    HurstIndex::new(v).unwrap()
}

fn assert_relative(got: f64, want: f64, tol: f64, what: &str) {
    let scale = want.abs().max(1e-300);
    assert!((got - want).abs() <= tol * scale, "{what}: {got} vs oracle {want}");
}

#[test]
fn integrated_covariance_matches_quadrature_at_reference_points() {
    let h = hurst(0.75);
    let oracle = ifbm_oracle(h, 1.0, 2.0);
    assert_relative(ifbm_covariance(h, 1.0, 2.0), oracle, 1e-8, "H=0.75 s=1 t=2");
    assert_relative(ifbm_oracle(hurst(0.5), 1.0, 1.0), 1.0 / 3.0, 1e-8, "quadrature sanity");
    for hv in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let h = hurst(hv);
        for (s, t) in [(1.0, 1.0), (0.5, 2.0), (-1.0, 1.5), (-2.0, -0.5), (3.0, 0.25)] {
            let want = ifbm_oracle(h, s, t);
            assert_relative(ifbm_covariance(h, s, t), want, 1e-8, &format!("H={hv} s={s} t={t}"));
        }
    }
}

#[test]
fn cross_covariance_matches_quadrature() {
    for hv in [0.2, 0.5, 0.8] {
        let h = hurst(hv);
        for (x, t) in [(1.0, 2.0), (2.0, 1.0), (-1.0, 1.0), (0.5, -1.5), (-2.0, -3.0)] {
            let want = cross_oracle(h, x, t);
            let got = fbm_ifbm_covariance(h, x, t);
            assert_relative(got, want, 1e-8, &format!("H={hv} x={x} t={t}"));
        }
    }
}

#[test]
fn kernel_matrix_matches_quadrature_on_random_grid_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for hv in [0.3, 0.75] {
        let h = hurst(hv);
        let grid = SampleGrid::anchored(4, 3, 0.37).unwrap();
        let space = build_space(grid, h).unwrap();
        let xs = grid.coordinates();
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                let want = ifbm_oracle(h, xs[i], xs[j]);
                let got = space.covariance(i, j);
                if want == 0.0 {
                    assert_eq!(got, 0.0);
                } else {
                    assert_relative(got, want, 1e-8, &format!("H={hv} ({i},{j})"));
                }
                assert_eq!(got, space.covariance(j, i));
            }
        }
        // Off-grid random pairs.
        for _ in 0..8 {
            let s = rng.random_range(-3.0..3.0);
            let t = rng.random_range(-3.0..3.0);
            assert_relative(ifbm_covariance(h, s, t), ifbm_oracle(h, s, t), 1e-8, "random pair");
        }
    }
}
