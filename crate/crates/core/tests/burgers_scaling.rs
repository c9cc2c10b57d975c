//! Scaling of the contact set and of the velocity modulus under refinement.

use burgerlab::burgers::{holder_check, solve};
use burgerlab::paths::{sample_fbm_fast, GridPath, HurstIndex, PathKind, SampleGrid};
use burgerlab::stats::{ols, replica_map};
use burgerlab::RandomnessSpec;

fn brownian() -> HurstIndex {
    HurstIndex::new(0.5).unwrap()
}

#[test]
fn contact_set_grows_like_square_root() {
    let exponents: Vec<u32> = (10..=16).collect();
    let mean_counts: Vec<f64> = exponents
        .iter()
        .map(|&e| {
            let n = 1usize << e;
            let grid = SampleGrid::anchored(n / 2, n / 2, 2.0 / n as f64).unwrap();
            let counts = replica_map(50, |r| {
                let u0 = sample_fbm_fast(brownian(), grid, RandomnessSpec::new(31 + e as u64, r))
                    .unwrap();
                solve(&u0, 1.0).unwrap().contact_indices.len() as f64
            });
            counts.iter().sum::<f64>() / counts.len() as f64
        })
        .collect();
    let x: Vec<f64> = exponents.iter().map(|&e| (e as f64) * 2f64.ln()).collect();
    let y: Vec<f64> = mean_counts.iter().map(|c| c.ln()).collect();
    let (slope, _) = ols(&x, &y).unwrap();
    assert!((slope - 0.5).abs() <= 0.1, "slope {slope}, counts {mean_counts:?}");
}

fn subsample(path: &GridPath, stride: usize) -> GridPath {
    let g = path.grid();
    let anchor = g.require_anchor().unwrap();
    let below = anchor / stride;
    let above = (g.count() - 1 - anchor) / stride;
    let grid = SampleGrid::anchored(below, above, g.spacing() * stride as f64).unwrap();
    let values = (0..grid.count()).map(|i| path.values()[anchor - below * stride + i * stride]).collect();
    GridPath::new(grid, values, PathKind::Fbm, path.hurst()).unwrap()
}

#[test]
fn holder_constant_is_stable_under_refinement() {
    let n = 1usize << 14;
    let grid = SampleGrid::anchored(n, n, 1.0 / n as f64).unwrap();
    for r in 0..6 {
        let fine = sample_fbm_fast(brownian(), grid, RandomnessSpec::new(41, r)).unwrap();
        let ks: Vec<f64> = [16usize, 8, 4, 2, 1]
            .iter()
            .map(|&stride| {
                let sol = solve(&subsample(&fine, stride), 0.1).unwrap();
                holder_check(&sol, 0.4, (-0.5, 0.5))
            })
            .collect();
        let hi = ks.iter().copied().fold(f64::MIN, f64::max);
        let lo = ks.iter().copied().fold(f64::MAX, f64::min);
        assert!(lo > 0.0 && hi <= 2.0 * lo, "replica {r}: {ks:?}");
    }
}
