//! Monte-Carlo moment checks of both fBm samplers and of the integrated path.

use burgerlab::paths::{
    fbm_covariance, fgn_autocovariance, ifbm_covariance, integrate_path, ExactSampler,
    FastSampler, GridPath, HurstIndex, SampleGrid,
};
use burgerlab::stats::{covariance_with_se, ks_critical_1pct, ks_statistic, replica_map, MeanSe};
use burgerlab::RandomnessSpec;

const HS: [f64; 3] = [0.3, 0.5, 0.7];

fn hurst(v: f64) -> HurstIndex {
    HurstIndex::new(v).unwrap()
}

fn column(paths: &[Vec<f64>], i: usize) -> Vec<f64> {
    paths.iter().map(|p| p[i]).collect()
}

fn path_max(p: &GridPath) -> f64 {
    p.values().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn check_covariance(paths: &[Vec<f64>], grid: &SampleGrid, h: HurstIndex, what: &str) {
    let xs = grid.coordinates();
    for i in 0..xs.len() {
        for j in 0..=i {
            let (c, se) = covariance_with_se(&column(paths, i), &column(paths, j));
            let want = fbm_covariance(h, xs[i], xs[j]);
            assert!(
                (c - want).abs() <= 4.0 * se + 1e-12,
                "{what} H={} ({}, {}): {c} vs {want} (se {se})",
                h.value(),
                xs[i],
                xs[j]
            );
        }
    }
}

#[test]
fn exact_and_fast_covariances_match_formula() {
    let grid = SampleGrid::anchored(3, 4, 0.5).unwrap();
    for (k, &hv) in HS.iter().enumerate() {
        let h = hurst(hv);
        let exact = ExactSampler::new(h, grid).unwrap();
        let fast = FastSampler::new(h, grid).unwrap();
        let base = RandomnessSpec::new(100 + k as u64, 0);
        let e = replica_map(10_000, |r| exact.sample(base.with_replica(r)).into_values());
        check_covariance(&e, &grid, h, "exact");
        let f = replica_map(10_000, |r| fast.sample(base.with_replica(r)).into_values());
        check_covariance(&f, &grid, h, "fast");
    }
}

#[test]
fn exact_and_fast_maxima_agree_in_distribution() {
    let grid = SampleGrid::anchored(0, 63, 1.0 / 63.0).unwrap();
    for &hv in &HS {
        let h = hurst(hv);
        let exact = ExactSampler::new(h, grid).unwrap();
        let fast = FastSampler::new(h, grid).unwrap();
        let a = replica_map(10_000, |r| path_max(&exact.sample(RandomnessSpec::new(1, r))));
        let b = replica_map(10_000, |r| path_max(&fast.sample(RandomnessSpec::new(2, r))));
        let d = ks_statistic(&a, &b);
        assert!(d < ks_critical_1pct(a.len(), b.len()), "H={hv}: KS {d}");
    }
}

#[test]
fn brownian_increments_are_uncorrelated() {
    let grid = SampleGrid::anchored(8, 8, 0.25).unwrap();
    let fast = FastSampler::new(hurst(0.5), grid).unwrap();
    let inc = replica_map(10_000, |r| fast.increments(RandomnessSpec::new(5, r)));
    for lag in 1..5 {
        for i in 0..inc[0].len() - lag {
            let (c, se) = covariance_with_se(&column(&inc, i), &column(&inc, i + lag));
            assert!(c.abs() <= 4.0 * se, "lag {lag} at {i}: {c} (se {se})");
        }
    }
}

#[test]
fn increments_are_stationary() {
    let spacing = 0.125;
    let grid = SampleGrid::anchored(8, 8, spacing).unwrap();
    for &hv in &HS {
        let h = hurst(hv);
        let fast = FastSampler::new(h, grid).unwrap();
        let inc = replica_map(10_000, |r| fast.increments(RandomnessSpec::new(6, r)));
        for lag in 0..4 {
            let want = fgn_autocovariance(h, lag as i64, spacing);
            for i in 0..inc[0].len() - lag {
                let (c, se) = covariance_with_se(&column(&inc, i), &column(&inc, i + lag));
                assert!((c - want).abs() <= 4.0 * se, "H={hv} lag {lag} at {i}: {c} vs {want}");
            }
        }
    }
}

fn second_moment(xs: &[f64]) -> MeanSe {
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    MeanSe::of(&sq)
}

#[test]
fn rescaled_grids_have_matching_marginal_variances() {
    let lambda = 2.0_f64;
    for &hv in &HS {
        let h = hurst(hv);
        let fine = FastSampler::new(h, SampleGrid::anchored(0, 32, 1.0 / 32.0).unwrap()).unwrap();
        let coarse =
            FastSampler::new(h, SampleGrid::anchored(0, 32, lambda / 32.0).unwrap()).unwrap();
        let scale = lambda.powf(-hv);
        let a = replica_map(10_000, |r| fine.sample(RandomnessSpec::new(7, r)).into_values());
        let b = replica_map(10_000, |r| {
            coarse.sample(RandomnessSpec::new(8, r)).into_values().into_iter().map(|v| v * scale).collect::<Vec<_>>()
        });
        for i in [4usize, 16, 32] {
            let (ma, mb) = (second_moment(&column(&a, i)), second_moment(&column(&b, i)));
            let se = ma.se.hypot(mb.se);
            assert!((ma.mean - mb.mean).abs() <= 4.0 * se, "H={hv} index {i}");
        }
    }
}

#[test]
fn self_similarity_in_distribution() {
    let lambda = 3.0_f64;
    for &hv in &HS {
        let h = hurst(hv);
        let fine = FastSampler::new(h, SampleGrid::anchored(0, 24, 1.0 / 24.0).unwrap()).unwrap();
        let coarse =
            FastSampler::new(h, SampleGrid::anchored(0, 24, lambda / 24.0).unwrap()).unwrap();
        let scale = lambda.powf(-hv);
        let a = replica_map(10_000, |r| fine.sample(RandomnessSpec::new(9, r)).into_values());
        let b = replica_map(10_000, |r| {
            coarse.sample(RandomnessSpec::new(10, r)).into_values().into_iter().map(|v| v * scale).collect::<Vec<_>>()
        });
        let crit = ks_critical_1pct(a.len(), b.len());
        for i in [12usize, 24] {
            let d = ks_statistic(&column(&a, i), &column(&b, i));
            assert!(d < crit, "H={hv} coordinate {i}: KS {d}");
        }
        let ma: Vec<f64> = a.iter().map(|p| p.iter().copied().fold(f64::MIN, f64::max)).collect();
        let mb: Vec<f64> = b.iter().map(|p| p.iter().copied().fold(f64::MIN, f64::max)).collect();
        let d = ks_statistic(&ma, &mb);
        assert!(d < crit, "H={hv} maximum: KS {d}");
    }
}

#[test]
fn integrated_brownian_second_moment() {
    let spacing = 1.0 / 256.0;
    let fast = FastSampler::new(hurst(0.5), SampleGrid::anchored(0, 256, spacing).unwrap()).unwrap();
    let ends = replica_map(10_000, |r| {
        let i = integrate_path(&fast.sample(RandomnessSpec::new(12, r))).unwrap();
        i.values()[256]
    });
    let m = second_moment(&ends);
    assert!((m.mean - 1.0 / 3.0).abs() <= 4.0 * m.se + spacing, "{m:?}");
}

#[test]
fn shift_identity_variances() {
    let spacing = 1.0 / 64.0;
    let grid = SampleGrid::anchored(64, 128, spacing).unwrap();
    let anchor = 64usize;
    let shift = 32usize; // x0 = 0.5
    for &hv in &HS {
        let h = hurst(hv);
        let fast = FastSampler::new(h, grid).unwrap();
        let offsets: [i64; 5] = [-64, -32, 16, 64, 96];
        let samples = replica_map(10_000, |r| {
            let w = fast.sample(RandomnessSpec::new(13, r));
            let i = integrate_path(&w).unwrap();
            let (wv, iv) = (w.values(), i.values());
            let base = anchor + shift;
            offsets
                .iter()
                .map(|&k| {
                    let x = k as f64 * spacing;
                    let j = (base as i64 + k) as usize;
                    iv[j] - iv[base] - wv[base] * x
                })
                .collect::<Vec<f64>>()
        });
        for (c, &k) in offsets.iter().enumerate() {
            let x = k as f64 * spacing;
            let m = second_moment(&column(&samples, c));
            let want = ifbm_covariance(h, x, x);
            assert!((m.mean - want).abs() <= 4.0 * m.se + spacing * spacing, "H={hv} x={x}: {m:?} vs {want}");
        }
    }
}
