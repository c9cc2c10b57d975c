//! Inviscid Burgers solutions through the convex minorant of the potential
//! `psi(x) = U(x) + x^2 / (2t)`, and a sticky-particle simulation that
//! reproduces the same shocks from first principles.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::envelopes::{lower_envelope, ConvexEnvelope};
use crate::error::{invalid, Result};
use crate::fractal::{default_ladder, dimension_estimate, ScalingFit};
use crate::paths::{cumulative_trapezoid, FastSampler, GridPath, HurstIndex, PathKind, SampleGrid};
use crate::rng::RandomnessSpec;
use crate::stats::{replica_map, MeanSe};

/// Fraction of the domain half-width excluded at each edge when contact
/// points feed dimension statistics.
pub const EDGE_EXCLUSION: f64 = 0.05;
/// Collision times closer than this (relative) are treated as simultaneous.
pub const COLLISION_TIE_TOLERANCE: f64 = 1e-12;

/// `psi(x) = U(x) + x^2/(2t)` with `U` the trapezoidal antiderivative of `u0`
/// anchored at 0.
pub fn build_potential(u0: &GridPath, t: f64) -> Result<GridPath> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("time must be positive, got {t}")));
    }
    let grid = *u0.grid();
    let anchor = grid.require_anchor()?;
    let u = cumulative_trapezoid(u0.values(), grid.spacing(), anchor);
    let values = u
        .iter()
        .enumerate()
        .map(|(i, ui)| {
            let x = grid.coordinate(i);
            ui + x * x / (2.0 * t)
        })
        .collect();
    GridPath::new(grid, values, PathKind::Potential, u0.hurst())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSolution {
    pub time: f64,
    pub potential: GridPath,
    /// Antiderivative `U` of the initial velocity, kept for momentum reports.
    pub initial_potential: Vec<f64>,
    pub minorant: ConvexEnvelope,
    pub contact_indices: Vec<usize>,
    /// Inclusive index ranges strictly between consecutive contact indices.
    pub shock_clusters: Vec<(usize, usize)>,
    /// `C'` at the contact indices (mean of the adjacent segment slopes).
    pub lagrangian_velocity: Vec<f64>,
}

/// A shock (or an isolated regular particle) in Lagrangian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub left: f64,
    pub right: f64,
    pub mass: f64,
    pub momentum: f64,
}

pub fn solve(u0: &GridPath, t: f64) -> Result<LagrangianSolution> {
    let potential = build_potential(u0, t)?;
    let grid = *potential.grid();
    let h = grid.spacing();
    let minorant = lower_envelope(potential.values())?;
    let contact_indices = minorant.node_indices.clone();
    let shock_clusters = contact_indices
        .windows(2)
        .filter(|w| w[1] - w[0] >= 2)
        .map(|w| (w[0] + 1, w[1] - 1))
        .collect();
    let slopes: Vec<f64> = minorant.segment_slopes.iter().map(|s| s / h).collect();
    let m = contact_indices.len();
    let lagrangian_velocity = (0..m)
        .map(|p| match (p.checked_sub(1).map(|q| slopes[q]), slopes.get(p)) {
            (Some(l), Some(r)) => 0.5 * (l + r),
            (Some(l), None) => l,
            (None, Some(r)) => *r,
            (None, None) => unreachable!("envelope has at least two nodes"),
        })
        .collect();
    let anchor = grid.require_anchor()?;
    let initial_potential = cumulative_trapezoid(u0.values(), h, anchor);
    Ok(LagrangianSolution {
        time: t,
        potential,
        initial_potential,
        minorant,
        contact_indices,
        shock_clusters,
        lagrangian_velocity,
    })
}

impl LagrangianSolution {
    pub fn contact_coordinates(&self) -> Vec<f64> {
        let g = self.potential.grid();
        self.contact_indices.iter().map(|&i| g.coordinate(i)).collect()
    }

    /// Contact coordinates away from the domain edges, where the minorant is
    /// biased by the truncation of the parabola.
    pub fn interior_contact_coordinates(&self) -> Vec<f64> {
        let g = self.potential.grid();
        let (lo, hi) = (g.left(), g.right());
        let margin = EDGE_EXCLUSION * 0.5 * (hi - lo);
        self.contact_coordinates()
            .into_iter()
            .filter(|&x| x >= lo + margin && x <= hi - margin)
            .collect()
    }

    /// Shocks as Lagrangian intervals between the bounding contact points.
    pub fn cluster_reports(&self) -> Vec<ClusterReport> {
        let g = self.potential.grid();
        self.contact_indices
            .windows(2)
            .filter(|w| w[1] - w[0] >= 2)
            .map(|w| ClusterReport {
                left: g.coordinate(w[0]),
                right: g.coordinate(w[1]),
                mass: (w[1] - w[0]) as f64 * g.spacing(),
                momentum: self.initial_potential[w[1]] - self.initial_potential[w[0]],
            })
            .collect()
    }

    /// `coordinate,potential,minorant,is_contact,velocity`; `velocity` is the
    /// minorant derivative `C'` (the shock slope inside a shock).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "coordinate,potential,minorant,is_contact,velocity")?;
        let g = self.potential.grid();
        let c = self.minorant.evaluate_all();
        let h = g.spacing();
        let mut next_contact = 0;
        for (i, (psi, ci)) in self.potential.values().iter().zip(&c).enumerate() {
            let contact = self.contact_indices.get(next_contact) == Some(&i);
            let v = if contact {
                next_contact += 1;
                self.lagrangian_velocity[next_contact - 1]
            } else {
                self.minorant.segment_slopes[self.minorant.segment_of(i)] / h
            };
            writeln!(out, "{},{},{},{},{}", g.coordinate(i), psi, ci, u8::from(contact), v)?;
        }
        Ok(())
    }
}

/// Smallest constant `K` with `|C'(x1) - C'(x2)| <= K |x1 - x2|^gamma` over
/// contact pairs inside `window`; 0 with fewer than two contacts.
pub fn holder_check(solution: &LagrangianSolution, gamma: f64, window: (f64, f64)) -> f64 {
    let g = solution.potential.grid();
    let pts: Vec<(f64, f64)> = solution
        .contact_indices
        .iter()
        .zip(&solution.lagrangian_velocity)
        .map(|(&i, &v)| (g.coordinate(i), v))
        .filter(|(x, _)| *x >= window.0 && *x <= window.1)
        .collect();
    let mut k: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            k = k.max((a.1 - b.1).abs() / (a.0 - b.0).abs().powf(gamma));
        }
    }
    k
}

/// Point masses on a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub masses: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(positions: Vec<f64>, velocities: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        let n = positions.len();
        if velocities.len() != n || masses.len() != n {
            return Err(invalid("system", "positions, velocities and masses differ in length"));
        }
        if positions.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("positions", "must be strictly increasing"));
        }
        if masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(invalid("masses", "must be positive and finite"));
        }
        if positions.iter().chain(&velocities).any(|v| !v.is_finite()) {
            return Err(invalid("system", "non-finite position or velocity"));
        }
        Ok(ParticleSystem { positions, velocities, masses })
    }

    /// One particle per grid cell: placed at the cell midpoint with the
    /// cell-averaged velocity and mass equal to the spacing. Their free
    /// streaming positions are exactly the increments of `t * psi`.
    pub fn from_cells(u0: &GridPath) -> Result<Self> {
        let g = u0.grid();
        let u = u0.values();
        let n = g.count() - 1;
        let positions = (0..n).map(|j| 0.5 * (g.coordinate(j) + g.coordinate(j + 1))).collect();
        let velocities = (0..n).map(|j| 0.5 * (u[j] + u[j + 1])).collect();
        ParticleSystem::new(positions, velocities, vec![g.spacing(); n])
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        crate::stats::sum(&self.masses)
    }

    pub fn total_momentum(&self) -> f64 {
        let p: Vec<f64> = self.masses.iter().zip(&self.velocities).map(|(m, v)| m * v).collect();
        crate::stats::sum(&p)
    }
}

/// A sticky cluster: the original particles `first..=last` moving together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StickyCluster {
    pub first: usize,
    pub last: usize,
    pub position: f64,
    pub velocity: f64,
    pub mass: f64,
    pub momentum: f64,
}

/// Event-driven completely inelastic dynamics up to time `t`.
pub fn sticky_clusters(system: &ParticleSystem, t: f64) -> Result<Vec<StickyCluster>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("time must be non-negative, got {t}")));
    }
    let mut clusters: Vec<StickyCluster> = (0..system.len())
        .map(|i| StickyCluster {
            first: i,
            last: i,
            position: system.positions[i],
            velocity: system.velocities[i],
            mass: system.masses[i],
            momentum: system.masses[i] * system.velocities[i],
        })
        .collect();
    let tie = COLLISION_TIE_TOLERANCE * t.max(1.0);
    let mut now = 0.0;
    loop {
        let times: Vec<f64> = clusters
            .windows(2)
            .map(|w| {
                let closing = w[0].velocity - w[1].velocity;
                if closing > 0.0 {
                    (w[1].position - w[0].position) / closing
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let dt = times.iter().copied().fold(f64::INFINITY, f64::min);
        if now + dt > t {
            for c in &mut clusters {
                c.position += c.velocity * (t - now);
            }
            return Ok(clusters);
        }
        for c in &mut clusters {
            c.position += c.velocity * dt;
        }
        now += dt;
        // merge every pair whose collision is tied with the earliest one
        let mut merged: Vec<StickyCluster> = Vec::with_capacity(clusters.len());
        for (i, c) in clusters.iter().enumerate() {
            let joins = i > 0 && times[i - 1] <= dt + tie;
            match merged.last_mut() {
                Some(prev) if joins => {
                    let mass = prev.mass + c.mass;
                    prev.position = (prev.position * prev.mass + c.position * c.mass) / mass;
                    prev.momentum += c.momentum;
                    prev.mass = mass;
                    prev.velocity = prev.momentum / mass;
                    prev.last = c.last;
                }
                _ => merged.push(*c),
            }
        }
        clusters = merged;
    }
}

pub fn sticky_simulate(system: &ParticleSystem, t: f64) -> Result<ParticleSystem> {
    let clusters = sticky_clusters(system, t)?;
    Ok(ParticleSystem {
        positions: clusters.iter().map(|c| c.position).collect(),
        velocities: clusters.iter().map(|c| c.velocity).collect(),
        masses: clusters.iter().map(|c| c.mass).collect(),
    })
}

/// Agreement between sticky clusters of the cell particles and the shock
/// segments of the minorant. A segment between contact nodes `a < b` holds
/// the cell particles `a..b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAgreement {
    pub sticky_multi: usize,
    pub shock_segments: usize,
    pub unmatched_sticky: Vec<(usize, usize)>,
    pub unmatched_shocks: Vec<(usize, usize)>,
    pub max_boundary_offset: usize,
}

impl ClusterAgreement {
    pub fn agrees(&self) -> bool {
        self.unmatched_sticky.is_empty() && self.unmatched_shocks.is_empty()
    }
}

pub fn compare_clusters(
    solution: &LagrangianSolution,
    clusters: &[StickyCluster],
    tolerance_cells: usize,
) -> ClusterAgreement {
    let sticky: Vec<(usize, usize)> = clusters
        .iter()
        .filter(|c| c.last > c.first)
        .map(|c| (c.first, c.last + 1))
        .collect();
    let shocks: Vec<(usize, usize)> =
        solution.shock_clusters.iter().map(|&(a, b)| (a - 1, b + 1)).collect();
    let offset = |x: (usize, usize), y: (usize, usize)| x.0.abs_diff(y.0).max(x.1.abs_diff(y.1));
    let mut max_offset = 0;
    let mut unmatched = |from: &[(usize, usize)], to: &[(usize, usize)]| {
        from.iter()
            .filter(|&&x| match to.iter().map(|&y| offset(x, y)).min() {
                Some(d) if d <= tolerance_cells => {
                    max_offset = max_offset.max(d);
                    false
                }
                _ => true,
            })
            .copied()
            .collect::<Vec<_>>()
    };
    let unmatched_sticky = unmatched(&sticky, &shocks);
    let unmatched_shocks = unmatched(&shocks, &sticky);
    ClusterAgreement {
        sticky_multi: sticky.len(),
        shock_segments: shocks.len(),
        unmatched_sticky,
        unmatched_shocks,
        max_boundary_offset: max_offset,
    }
}

/// Box-counting dimension of the interior contact set over replicas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStudy {
    pub hurst: f64,
    pub points: usize,
    pub half_width: f64,
    pub time: f64,
    pub seed: u64,
    /// Per-replica slope; `None` when the ladder was too short to fit.
    pub slopes: Vec<Option<f64>>,
    pub contacts: Vec<usize>,
    pub mean: MeanSe,
    /// Fit of the first replica with a usable ladder, for plotting.
    pub example_fit: Option<ScalingFit>,
}

impl DimensionStudy {
    pub fn used(&self) -> usize {
        self.slopes.iter().flatten().count()
    }
}

/// Solve on `points` cells of `[-half_width, half_width]` for each replica
/// and fit the box-counting slope of the contact points away from the edges.
pub fn contact_dimension(
    h: HurstIndex,
    points: usize,
    half_width: f64,
    time: f64,
    replicas: usize,
    seed: u64,
) -> Result<DimensionStudy> {
    if points < 16 || !points.is_multiple_of(2) {
        return Err(invalid("points", format!("need an even count >= 16, got {points}")));
    }
    if replicas == 0 {
        return Err(invalid("replicas", "need at least 1"));
    }
    let grid = SampleGrid::anchored(points / 2, points / 2, 2.0 * half_width / points as f64)?;
    let sampler = FastSampler::new(h, grid)?;
    let margin = EDGE_EXCLUSION * half_width;
    let window = (-half_width + margin, half_width - margin);
    let base = RandomnessSpec::new(seed, 0);
    let fits = replica_map(replicas, |r| -> Result<(usize, Option<ScalingFit>)> {
        let sol = solve(&sampler.sample(base.with_replica(r)), time)?;
        let pts = sol.interior_contact_coordinates();
        let fit = dimension_estimate(&pts, window, &default_ladder(&pts, window)).ok();
        Ok((pts.len(), fit))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let slopes: Vec<Option<f64>> = fits.iter().map(|(_, f)| f.as_ref().map(|f| f.slope)).collect();
    let used: Vec<f64> = slopes.iter().flatten().copied().collect();
    if used.is_empty() {
        return Err(crate::error::LabError::DegenerateFit("no replica produced a usable ladder".into()));
    }
    Ok(DimensionStudy {
        hurst: h.value(),
        points,
        half_width,
        time,
        seed,
        mean: MeanSe::of(&used),
        contacts: fits.iter().map(|(n, _)| *n).collect(),
        example_fit: fits.into_iter().find_map(|(_, f)| f),
        slopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::sample_fbm_fast;

    fn grid(half: usize, h: f64) -> SampleGrid {
        SampleGrid::anchored(half, half, h).unwrap()
    }

    #[test]
    fn zero_velocity_potential_is_parabola() {
        let g = grid(16, 0.125);
        let u0 = GridPath::from_fn(g, PathKind::Velocity, |_| 0.0).unwrap();
        let psi = build_potential(&u0, 1.0).unwrap();
        for (i, v) in psi.values().iter().enumerate() {
            let x = g.coordinate(i);
            assert_eq!(*v, x * x / 2.0);
        }
        assert!(build_potential(&u0, 0.0).is_err());
        assert!(build_potential(&u0, -1.0).is_err());
    }

    #[test]
    fn linear_compression_potential() {
        let g = grid(16, 0.125);
        let u0 = GridPath::from_fn(g, PathKind::Velocity, |x| -2.0 * x).unwrap();
        let psi = build_potential(&u0, 1.0).unwrap();
        for (i, v) in psi.values().iter().enumerate() {
            let x = g.coordinate(i);
            assert!((v + x * x / 2.0).abs() < 1e-14);
        }
        let sol = solve(&u0, 1.0).unwrap();
        assert_eq!(sol.contact_indices, vec![0, 32]);
        assert_eq!(sol.shock_clusters, vec![(1, 31)]);
    }

    #[test]
    fn zero_velocity_everything_regular() {
        let g = grid(32, 1.0 / 32.0);
        let u0 = GridPath::from_fn(g, PathKind::Velocity, |_| 0.0).unwrap();
        let sol = solve(&u0, 1.0).unwrap();
        assert_eq!(sol.contact_indices.len(), g.count());
        assert!(sol.shock_clusters.is_empty());
        for (p, &i) in sol.contact_indices.iter().enumerate().skip(1).take(g.count() - 2) {
            assert!((sol.lagrangian_velocity[p] - g.coordinate(i)).abs() < 1e-12);
        }
        let k = holder_check(&sol, 0.4, (-0.5, 0.5));
        assert!(k > 0.0 && k <= 1.0 + 1e-12);
    }

    #[test]
    fn holder_single_contact_is_zero() {
        let g = grid(16, 0.125);
        let u0 = GridPath::from_fn(g, PathKind::Velocity, |x| -2.0 * x).unwrap();
        let sol = solve(&u0, 1.0).unwrap();
        assert_eq!(holder_check(&sol, 0.4, (-0.5, 0.5)), 0.0);
        assert_eq!(holder_check(&sol, 0.4, (1.5, 3.0)), 0.0);
    }

    #[test]
    fn potential_refinement_converges() {
        // a smooth velocity makes the trapezoid error O(h^2)
        let coarse = grid(64, 1.0 / 32.0);
        let fine = grid(128, 1.0 / 64.0);
        let f = |x: f64| (3.0 * x).sin() + x * x;
        let pc = build_potential(&GridPath::from_fn(coarse, PathKind::Velocity, f).unwrap(), 1.0)
            .unwrap();
        let pf =
            build_potential(&GridPath::from_fn(fine, PathKind::Velocity, f).unwrap(), 1.0).unwrap();
        let max_change = (0..coarse.count())
            .map(|i| (pc.values()[i] - pf.values()[2 * i]).abs())
            .fold(0.0, f64::max);
        let h = coarse.spacing();
        assert!(max_change < 2.0 * h * h, "{max_change}");
    }

    #[test]
    fn solution_invariants_on_fbm() {
        let h = HurstIndex::new(0.5).unwrap();
        let g = grid(512, 1.0 / 256.0);
        let u0 = sample_fbm_fast(h, g, RandomnessSpec::new(4, 0)).unwrap();
        let sol = solve(&u0, 1.0).unwrap();
        let c = sol.minorant.evaluate_all();
        let psi = sol.potential.values();
        for i in 0..g.count() {
            assert!(c[i] <= psi[i] + 1e-12 * psi[i].abs().max(1.0));
        }
        for &i in &sol.contact_indices {
            assert_eq!(c[i], psi[i]);
        }
        assert!(sol.lagrangian_velocity.windows(2).all(|w| w[0] <= w[1]));
        // every index is a contact or in exactly one cluster
        let mut cover = vec![0u8; g.count()];
        for &i in &sol.contact_indices {
            cover[i] += 1;
        }
        for &(a, b) in &sol.shock_clusters {
            for c in &mut cover[a..=b] {
                *c += 1;
            }
        }
        assert!(cover.iter().all(|&c| c == 1));
        let reports = sol.cluster_reports();
        assert_eq!(reports.len(), sol.shock_clusters.len());
        assert!(reports.iter().all(|r| r.mass > 0.0 && r.right > r.left));
    }

    #[test]
    fn sticky_symmetric_collapse() {
        let s = ParticleSystem::new(vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, -1.0], vec![1.0; 3])
            .unwrap();
        let out = sticky_simulate(&s, 1.0).unwrap();
        assert_eq!(out.positions, vec![0.0]);
        assert_eq!(out.velocities, vec![0.0]);
        assert_eq!(out.masses, vec![3.0]);
    }

    #[test]
    fn sticky_translation() {
        let s = ParticleSystem::new(vec![0.0, 1.0, 2.0], vec![0.5; 3], vec![1.0; 3]).unwrap();
        let out = sticky_simulate(&s, 2.0).unwrap();
        assert_eq!(out.positions, vec![1.0, 2.0, 3.0]);
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn particle_system_validation() {
        assert!(ParticleSystem::new(vec![0.0, 0.0], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(ParticleSystem::new(vec![0.0, 1.0], vec![0.0; 2], vec![1.0, 0.0]).is_err());
        assert!(ParticleSystem::new(vec![0.0], vec![0.0; 2], vec![1.0]).is_err());
    }

    #[test]
    fn sticky_matches_minorant_and_conserves() {
        let g = grid(64, 1.0 / 64.0);
        for (r, hv) in [0.3, 0.5, 0.7].into_iter().enumerate() {
            let h = HurstIndex::new(hv).unwrap();
            let u0 = sample_fbm_fast(h, g, RandomnessSpec::new(8, r as u64)).unwrap();
            let sol = solve(&u0, 1.0).unwrap();
            let sys = ParticleSystem::from_cells(&u0).unwrap();
            let clusters = sticky_clusters(&sys, 1.0).unwrap();
            let out = sticky_simulate(&sys, 1.0).unwrap();
            assert_eq!(out.total_mass(), sys.total_mass());
            let scale: f64 = sys.masses.iter().zip(&sys.velocities).map(|(m, v)| (m * v).abs()).sum();
            assert!((out.total_momentum() - sys.total_momentum()).abs() <= 1e-12 * scale);
            assert!(out.positions.windows(2).all(|w| w[0] < w[1]));
            let agreement = compare_clusters(&sol, &clusters, 1);
            assert!(agreement.agrees(), "H = {hv}: {agreement:?}");
        }
    }

    #[test]
    fn small_dimension_study() {
        let h = HurstIndex::new(0.5).unwrap();
        let a = contact_dimension(h, 4096, 1.0, 1.0, 4, 3).unwrap();
        let b = contact_dimension(h, 4096, 1.0, 1.0, 4, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.slopes.len(), 4);
        assert!(a.used() >= 1);
        assert!(a.mean.mean > 0.0 && a.mean.mean < 1.0);
        assert!(contact_dimension(h, 15, 1.0, 1.0, 4, 3).is_err());
    }
}
