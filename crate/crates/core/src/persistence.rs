//! Monte-Carlo persistence probabilities of fBm and integrated fBm, exponent
//! regression over geometric horizon ladders, and the numerical check of the
//! slope-functional inequality chain.
//!
//! Barriers are checked at grid points only, which biases every probability
//! upward; [`refinement_study`] quantifies that bias.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelopes::{functional_f, left_slope, right_slope, slope_pair, windowed_slope_pair};
use crate::error::{invalid, LabError, Result};
use crate::fractal::ScalingFit;
use crate::paths::{cumulative_trapezoid, FastSampler, HurstIndex, SampleGrid};
use crate::rng::{derive_seed, RandomnessSpec};
use crate::stats::{ks_critical_1pct, ks_statistic, replica_map, MeanSe};

/// Probabilities below `RELIABILITY_FLOOR_COUNT / replicas` are not used in fits.
pub const RELIABILITY_FLOOR_COUNT: f64 = 10.0;
/// Number of standard errors of Monte-Carlo slack on every comparison.
pub const SIGMA_SLACK: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventProcess {
    /// `w_H(x) <= level` on `(0, T]`.
    FbmMax,
    /// `I_H(x) <= level` on `[-T, T]`.
    IfbmTwoSided,
    /// `I_H(x) <= level` on `1 <= |x| <= T`.
    IfbmPunctured,
    /// `I_H(x) + 2|x| <= level` on `1 <= |x| <= T`.
    IfbmTrended,
    /// `I_H(x) <= level` on `(0, T]`.
    IfbmOneSided,
}

impl EventProcess {
    pub fn name(self) -> &'static str {
        match self {
            EventProcess::FbmMax => "fbm_max",
            EventProcess::IfbmTwoSided => "ifbm_two_sided",
            EventProcess::IfbmPunctured => "ifbm_punctured",
            EventProcess::IfbmTrended => "ifbm_trended",
            EventProcess::IfbmOneSided => "ifbm_one_sided",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            EventProcess::FbmMax,
            EventProcess::IfbmTwoSided,
            EventProcess::IfbmPunctured,
            EventProcess::IfbmTrended,
            EventProcess::IfbmOneSided,
        ]
        .into_iter()
        .find(|p| p.name() == s)
    }

    fn two_sided(self) -> bool {
        matches!(
            self,
            EventProcess::IfbmTwoSided | EventProcess::IfbmPunctured | EventProcess::IfbmTrended
        )
    }

    fn integrated(self) -> bool {
        !matches!(self, EventProcess::FbmMax)
    }

    // Whether the barrier is checked at coordinate x.
    fn monitored(self, x: f64) -> bool {
        match self {
            EventProcess::FbmMax | EventProcess::IfbmOneSided => x > 0.0,
            EventProcess::IfbmTwoSided => true,
            EventProcess::IfbmPunctured | EventProcess::IfbmTrended => x.abs() >= 1.0,
        }
    }

    fn violates(self, x: f64, value: f64, level: f64) -> bool {
        let v = match self {
            EventProcess::IfbmTrended => value + 2.0 * x.abs(),
            _ => value,
        };
        v > level
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierEvent {
    pub process: EventProcess,
    pub level: f64,
    pub horizon: f64,
}

impl BarrierEvent {
    pub fn new(process: EventProcess, level: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 1.0 && horizon.is_finite()) {
            return Err(invalid("horizon", format!("must exceed 1, got {horizon}")));
        }
        if level.is_nan() {
            return Err(invalid("level", "is NaN"));
        }
        Ok(BarrierEvent { process, level, horizon })
    }
}

/// Monte-Carlo estimate of a probability or a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub event: EventProcess,
    pub hurst: f64,
    pub horizon: f64,
    pub level: f64,
    pub spacing: f64,
    pub p: f64,
    pub se: f64,
    pub replicas: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn reliable(&self) -> bool {
        self.p > RELIABILITY_FLOOR_COUNT / self.replicas as f64
    }

    /// JSON-lines record `{event, H, T, spacing, level, p, se, replicas, seed}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "event": self.event.name(),
            "H": self.hurst,
            "T": self.horizon,
            "spacing": self.spacing,
            "level": self.level,
            "p": self.p,
            "se": self.se,
            "replicas": self.replicas,
            "seed": self.seed,
        })
        .to_string()
    }
}

/// Sampler for the processes behind the barrier events, on the grid that
/// covers the largest horizon of a ladder.
struct EventSampler {
    process: EventProcess,
    sampler: FastSampler,
    anchor: usize,
}

impl EventSampler {
    fn new(process: EventProcess, h: HurstIndex, spacing: f64, horizon: f64) -> Result<Self> {
        let steps = (horizon / spacing - 1e-9).ceil() as usize;
        let below = if process.two_sided() { steps } else { 0 };
        let grid = SampleGrid::anchored(below, steps, spacing)?;
        Ok(EventSampler { process, sampler: FastSampler::new(h, grid)?, anchor: below })
    }

    fn grid(&self) -> &SampleGrid {
        self.sampler.grid()
    }

    fn values(&self, rand: RandomnessSpec) -> Vec<f64> {
        let w = self.sampler.sample(rand).into_values();
        if self.process.integrated() {
            cumulative_trapezoid(&w, self.grid().spacing(), self.anchor)
        } else {
            w
        }
    }

    /// Smallest |x| of a monitored barrier violation (infinite if none); the
    /// event at horizon T holds iff this exceeds T.
    fn escape_radius(&self, values: &[f64], level: f64) -> f64 {
        let g = self.grid();
        let mut r = f64::INFINITY;
        for (i, &v) in values.iter().enumerate() {
            let x = g.coordinate(i);
            if x.abs() < r && self.process.monitored(x) && self.process.violates(x, v, level) {
                r = x.abs();
            }
        }
        r
    }
}

fn validate_run(spacing: f64, replicas: usize) -> Result<()> {
    if !(spacing > 0.0 && spacing <= 1.0) {
        return Err(invalid("spacing", format!("must lie in (0, 1], got {spacing}")));
    }
    if replicas < 100 {
        return Err(invalid("replicas", format!("need at least 100, got {replicas}")));
    }
    Ok(())
}

/// Estimates for every horizon of a ladder from one set of paths spanning
/// the largest horizon (common random numbers across horizons).
pub fn estimate_persistence_ladder(
    process: EventProcess,
    level: f64,
    horizons: &[f64],
    h: HurstIndex,
    spacing: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    validate_run(spacing, replicas)?;
    for &t in horizons {
        BarrierEvent::new(process, level, t)?;
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    if horizons.is_empty() {
        return Ok(Vec::new());
    }
    let sampler = EventSampler::new(process, h, spacing, t_max)?;
    let base = RandomnessSpec::new(seed, 0);
    let radii = replica_map(replicas, |r| {
        let v = sampler.values(base.with_replica(r));
        sampler.escape_radius(&v, level)
    });
    Ok(horizons
        .iter()
        .map(|&t| {
            let hits = radii.iter().filter(|&&r| r > t).count();
            let m = MeanSe::of_indicators(hits, replicas);
            McEstimate {
                event: process,
                hurst: h.value(),
                horizon: t,
                level,
                spacing,
                p: m.mean,
                se: m.se,
                replicas,
                seed,
            }
        })
        .collect())
}

pub fn estimate_persistence(
    event: BarrierEvent,
    h: HurstIndex,
    spacing: f64,
    replicas: usize,
    seed: u64,
) -> Result<McEstimate> {
    let mut v = estimate_persistence_ladder(
        event.process,
        event.level,
        &[event.horizon],
        h,
        spacing,
        replicas,
        seed,
    )?;
    Ok(v.remove(0))
}

/// Geometric (factor 2) horizon ladder `from, 2 from, ..., <= to`.
pub fn horizon_ladder(from: f64, to: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = from;
    while t <= to * (1.0 + 1e-12) {
        out.push(t);
        t *= 2.0;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub fit: ScalingFit,
    /// Horizons dropped because their estimate fell below the floor.
    pub excluded: Vec<f64>,
}

impl ExponentFit {
    pub fn exponent(&self) -> f64 {
        self.fit.slope
    }
}

/// Slope of `log(1/p_T)` against `log T`.
pub fn exponent_fit(estimates: &[McEstimate]) -> Result<ExponentFit> {
    let mut sorted = estimates.to_vec();
    sorted.sort_by(|a, b| a.horizon.total_cmp(&b.horizon));
    let (kept, dropped): (Vec<_>, Vec<_>) = sorted.into_iter().partition(|e| e.reliable());
    if kept.len() < 2 {
        return Err(LabError::DegenerateFit(format!(
            "{} horizons above the reliability floor",
            kept.len()
        )));
    }
    let pairs = kept.iter().map(|e| (1.0 / e.horizon, 1.0 / e.p)).collect();
    let errors: Vec<f64> = kept.iter().map(|e| e.se / e.p).collect();
    Ok(ExponentFit {
        fit: ScalingFit::fit_with_errors(pairs, Some(&errors))?,
        excluded: dropped.iter().map(|e| e.horizon).collect(),
    })
}

/// Estimates of one event on successively finer grids. Coarser grids are
/// subsamples of the finest path, so the monitored sets are nested and the
/// estimates can only decrease as the spacing shrinks.
pub fn refinement_study(
    event: BarrierEvent,
    h: HurstIndex,
    spacings: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    if spacings.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(invalid("spacings", "must be strictly decreasing"));
    }
    let finest = *spacings.last().ok_or_else(|| invalid("spacings", "empty"))?;
    validate_run(spacings[0], replicas)?;
    let strides: Vec<usize> = spacings
        .iter()
        .map(|&s| {
            let k = (s / finest).round();
            if (k * finest - s).abs() > 1e-9 * s {
                Err(invalid("spacings", format!("{s} is not a multiple of {finest}")))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;
    let sampler = EventSampler::new(event.process, h, finest, event.horizon)?;
    let g = *sampler.grid();
    let anchor = sampler.anchor;
    let base = RandomnessSpec::new(seed, 0);
    let hits: Vec<Vec<bool>> = replica_map(replicas, |r| {
        let v = sampler.values(base.with_replica(r));
        strides
            .iter()
            .map(|&k| {
                v.iter().enumerate().all(|(i, &val)| {
                    let x = g.coordinate(i);
                    i.abs_diff(anchor) % k != 0
                        || x.abs() > event.horizon
                        || !event.process.monitored(x)
                        || !event.process.violates(x, val, event.level)
                })
            })
            .collect()
    });
    Ok(spacings
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let m = MeanSe::of_indicators(hits.iter().filter(|h| h[j]).count(), replicas);
            McEstimate {
                event: event.process,
                hurst: h.value(),
                horizon: event.horizon,
                level: event.level,
                spacing: s,
                p: m.mean,
                se: m.se,
                replicas,
                seed,
            }
        })
        .collect())
}

/// `E max w_H` over `[0, 1]` on a grid of `2^12` steps, with its standard
/// error.
pub fn estimate_m1(h: HurstIndex, replicas: usize, seed: u64) -> Result<MeanSe> {
    let grid = SampleGrid::anchored(0, M1_GRID_STEPS, 1.0 / M1_GRID_STEPS as f64)?;
    let sampler = FastSampler::new(h, grid)?;
    let base = RandomnessSpec::new(seed, 0);
    let maxima = replica_map(replicas, |r| {
        sampler.sample(base.with_replica(r)).values().iter().copied().fold(0.0, f64::max)
    });
    Ok(MeanSe::of(&maxima))
}

pub const M1_GRID_STEPS: usize = 4096;

/// Expected shortfall of a discretely monitored Brownian maximum with `n`
/// steps on the unit interval: `-zeta(1/2) / sqrt(2 pi n)`.
pub fn brownian_max_discretization(n: usize) -> f64 {
    0.582_597_157_939_010_6 / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Two sides agree within the slack.
    Equal,
    /// `left <= right` within the slack.
    AtMost,
    /// `left >= right` within the slack.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub relation: Relation,
    pub left: f64,
    pub right: f64,
    /// Combined standard error of `left - right`.
    pub se: f64,
    pub pass: bool,
}

impl RelationCheck {
    pub fn new(relation: Relation, left: f64, right: f64, se: f64) -> Self {
        let slack = SIGMA_SLACK * se;
        let pass = match relation {
            Relation::Equal => (left - right).abs() <= slack,
            Relation::AtMost => left <= right + slack,
            Relation::AtLeast => left + slack >= right,
        };
        RelationCheck { relation, left, right, se, pass }
    }

    /// A deterministic comparison (`se` is the absolute tolerance itself).
    pub fn exact(relation: Relation, left: f64, right: f64, tolerance: f64) -> Self {
        Self::new(relation, left, right, tolerance / SIGMA_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub hurst: f64,
    pub n: usize,
    pub replicas: usize,
    pub seed: u64,
    pub m1: MeanSe,
    pub relations: BTreeMap<String, RelationCheck>,
}

impl ChainReport {
    pub fn all_pass(&self) -> bool {
        self.relations.values().all(|r| r.pass)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report is serializable")
    }
}

struct ChainSample {
    f: f64,
    f_endpoints: f64,
    max_avg: f64,
    neg_last_left: f64,
    mid_gap: f64,
    xi: f64,
    windowed_mid: f64,
    windowed_zero: f64,
    trended: bool,
}

fn chain_sample(ext: &[f64], n: usize) -> ChainSample {
    let core = &ext[n..=2 * n];
    let mid = (n / 2).max(1);
    let w0 = windowed_slope_pair(ext, n, n).expect("extension covers the window");
    let wm = windowed_slope_pair(ext, n + mid, n).expect("extension covers the window");
    let trended = (1..=n).all(|p| ext[n + p] + 2.0 * p as f64 <= 0.0 && ext[n - p] + 2.0 * p as f64 <= 0.0);
    ChainSample {
        f: functional_f(core),
        f_endpoints: crate::envelopes::functional_f_endpoints(core),
        max_avg: right_slope(core, 0).expect("n >= 1"),
        neg_last_left: -left_slope(core, n).expect("n >= 1"),
        mid_gap: slope_pair(core, mid).map(|s| s.gap().max(0.0)).unwrap_or(0.0),
        xi: w0.gap().max(0.0),
        windowed_mid: wm.gap(),
        windowed_zero: w0.gap(),
        trended,
    }
}

/// Numerical check of the identities and inequalities relating the slope
/// functional `F` of integrated fBm on `{0..N}` (unit spacing, `T = N`) to
/// the maximum of fBm and the trended persistence probability.
pub fn verify_chain(h: HurstIndex, n: usize, replicas: usize, seed: u64) -> Result<ChainReport> {
    if n < 2 {
        return Err(invalid("n", format!("need N >= 2, got {n}")));
    }
    if replicas < 2 {
        return Err(invalid("replicas", "need at least 2"));
    }
    let grid = SampleGrid::anchored(n, 2 * n, 1.0)?;
    let sampler = FastSampler::new(h, grid)?;
    let base = RandomnessSpec::new(seed, 0);
    let samples = replica_map(replicas, |r| {
        let w = sampler.sample(base.with_replica(r)).into_values();
        let ext = cumulative_trapezoid(&w, 1.0, n);
        chain_sample(&ext, n)
    });
    let m1 = estimate_m1(h, replicas, derive_seed(seed, 1))?;
    let t = n as f64;
    let col = |f: &dyn Fn(&ChainSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
    let f = col(&|s| s.f);
    let max_avg2 = col(&|s| 2.0 * s.max_avg);
    let xi = col(&|s| s.xi);
    let ef = MeanSe::of(&f);
    let mut rel = BTreeMap::new();

    let telescoping = samples
        .iter()
        .map(|s| (s.f - s.f_endpoints).abs() / s.f_endpoints.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    rel.insert("telescoping".into(), RelationCheck::exact(Relation::AtMost, telescoping, 1e-9, 0.0));

    let d10 = MeanSe::of_differences(&f, &max_avg2);
    rel.insert(
        "mean_identity".into(),
        RelationCheck::new(Relation::Equal, ef.mean, MeanSe::of(&max_avg2).mean, d10.se),
    );

    let sym = MeanSe::of_differences(&col(&|s| s.neg_last_left), &col(&|s| s.max_avg));
    rel.insert(
        "slope_symmetry".into(),
        RelationCheck::new(
            Relation::Equal,
            MeanSe::of(&col(&|s| s.neg_last_left)).mean,
            MeanSe::of(&col(&|s| s.max_avg)).mean,
            sym.se,
        ),
    );

    let th = t.powf(h.value());
    let bound11 = 2.0 * m1.mean * th;
    rel.insert(
        "mean_upper_bound".into(),
        RelationCheck::new(
            Relation::AtMost,
            ef.mean,
            bound11,
            ef.se.hypot(2.0 * th * m1.se),
        ),
    );

    let half = replicas / 2;
    let ks = ks_statistic(
        &samples[..half].iter().map(|s| s.windowed_mid).collect::<Vec<_>>(),
        &samples[half..].iter().map(|s| s.windowed_zero).collect::<Vec<_>>(),
    );
    let ks_crit = ks_critical_1pct(half, replicas - half);
    rel.insert("window_stationarity".into(), RelationCheck::exact(Relation::AtMost, ks, ks_crit, 0.0));

    let mid_gap = col(&|s| s.mid_gap);
    let d14 = MeanSe::of_differences(&mid_gap, &xi);
    rel.insert(
        "midpoint_gap_dominates".into(),
        RelationCheck::new(Relation::AtLeast, MeanSe::of(&mid_gap).mean, MeanSe::of(&xi).mean, d14.se),
    );
    let scaled_xi: Vec<f64> = xi.iter().map(|x| (t - 2.0) * x).collect();
    let d14s = MeanSe::of_differences(&f, &scaled_xi);
    rel.insert(
        "gap_sum_bound".into(),
        RelationCheck::new(Relation::AtLeast, ef.mean, MeanSe::of(&scaled_xi).mean, d14s.se),
    );

    let xi4 = samples.iter().filter(|s| s.xi >= 4.0).count();
    let p_xi4 = MeanSe::of_indicators(xi4, replicas);
    let lhs15 = bound11;
    let rhs15 = (t - 2.0) * 4.0 * p_xi4.mean;
    rel.insert(
        "gap_tail_bound".into(),
        RelationCheck::new(
            Relation::AtLeast,
            lhs15,
            rhs15,
            (2.0 * th * m1.se).hypot((t - 2.0) * 4.0 * p_xi4.se),
        ),
    );

    let trended = samples.iter().filter(|s| s.trended).count();
    let p_tilde = MeanSe::of_indicators(trended, replicas);
    let ind_xi4: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.xi >= 4.0))).collect();
    let ind_tr: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s.trended))).collect();
    let d16 = MeanSe::of_differences(&ind_xi4, &ind_tr);
    rel.insert("trended_inclusion".into(), RelationCheck::new(Relation::AtLeast, p_xi4.mean, p_tilde.mean, d16.se));

    let bound17 = m1.mean * t.powf(-(1.0 - h.value()));
    rel.insert(
        "trended_persistence_bound".into(),
        RelationCheck::new(
            Relation::AtMost,
            p_tilde.mean,
            bound17,
            p_tilde.se.hypot(m1.se * t.powf(-(1.0 - h.value()))),
        ),
    );

    if h.value() == 0.5 {
        // Brownian case: E max on [0, 1] = sqrt(2/pi), less the known
        // discrete-monitoring shortfall.
        let exact = (2.0 / std::f64::consts::PI).sqrt();
        let shortfall = brownian_max_discretization(M1_GRID_STEPS);
        rel.insert(
            "brownian_max_mean".into(),
            RelationCheck::new(Relation::Equal, m1.mean + shortfall, exact, m1.se),
        );
    }

    Ok(ChainReport { hurst: h.value(), n, replicas, seed, m1, relations: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstIndex {
        HurstIndex::new(v).unwrap()
    }

    #[test]
    fn event_validation() {
        assert!(BarrierEvent::new(EventProcess::FbmMax, 1.0, 1.0).is_err());
        assert!(BarrierEvent::new(EventProcess::FbmMax, f64::NAN, 4.0).is_err());
        let e = BarrierEvent::new(EventProcess::FbmMax, 1.0, 4.0).unwrap();
        assert!(estimate_persistence(e, h(0.5), 2.0, 100, 1).is_err());
        assert!(estimate_persistence(e, h(0.5), 1.0, 99, 1).is_err());
        assert_eq!(EventProcess::parse("ifbm_trended"), Some(EventProcess::IfbmTrended));
        assert_eq!(EventProcess::parse("nope"), None);
    }

    #[test]
    fn monitored_sets() {
        assert!(!EventProcess::FbmMax.monitored(0.0));
        assert!(EventProcess::IfbmTwoSided.monitored(0.0));
        assert!(!EventProcess::IfbmPunctured.monitored(0.5));
        assert!(EventProcess::IfbmPunctured.monitored(-1.0));
        assert!(EventProcess::IfbmTrended.violates(-2.0, -3.9, 0.0));
        assert!(!EventProcess::IfbmTrended.violates(-2.0, -4.0, 0.0));
    }

    #[test]
    fn unreachable_barrier_gives_one() {
        let t: f64 = 64.0;
        let level = 10.0 * t.powf(0.5) * (2.0 * t.ln()).sqrt();
        let e = BarrierEvent::new(EventProcess::FbmMax, level, t).unwrap();
        let est = estimate_persistence(e, h(0.5), 1.0, 200, 3).unwrap();
        assert_eq!(est.p, 1.0);
        assert_eq!(est.se, 0.0);
    }

    #[test]
    fn ladder_matches_single_estimates() {
        let hs = h(0.7);
        let ladder = horizon_ladder(4.0, 16.0);
        assert_eq!(ladder, vec![4.0, 8.0, 16.0]);
        let all = estimate_persistence_ladder(EventProcess::IfbmOneSided, 1.0, &ladder, hs, 1.0, 300, 5)
            .unwrap();
        assert!(all.windows(2).all(|w| w[0].p >= w[1].p));
        let e = BarrierEvent::new(EventProcess::IfbmOneSided, 1.0, 16.0).unwrap();
        let single = estimate_persistence(e, hs, 1.0, 300, 5).unwrap();
        assert_eq!(single, all[2]);
    }

    #[test]
    fn synthetic_power_law_exponent() {
        let est: Vec<McEstimate> = horizon_ladder(64.0, 512.0)
            .into_iter()
            .map(|t| McEstimate {
                event: EventProcess::FbmMax,
                hurst: 0.5,
                horizon: t,
                level: 1.0,
                spacing: 1.0,
                p: t.powf(-0.4),
                se: 0.0,
                replicas: 1_000_000,
                seed: 0,
            })
            .collect();
        let fit = exponent_fit(&est).unwrap();
        assert!((fit.exponent() - 0.4).abs() < 1e-12);
        assert!(fit.excluded.is_empty());
        let mut low = est.clone();
        low[3].p = 1e-6;
        let fit = exponent_fit(&low).unwrap();
        assert_eq!(fit.excluded, vec![512.0]);
    }

    #[test]
    fn refinement_is_monotone_and_deterministic() {
        let e = BarrierEvent::new(EventProcess::FbmMax, 1.0, 16.0).unwrap();
        let a = refinement_study(e, h(0.5), &[1.0, 0.5, 0.25], 400, 9).unwrap();
        assert!(a.windows(2).all(|w| w[0].p >= w[1].p));
        let b = refinement_study(e, h(0.5), &[1.0, 0.5, 0.25], 400, 9).unwrap();
        assert_eq!(a, b);
        assert!(refinement_study(e, h(0.5), &[0.5, 1.0], 400, 9).is_err());
        assert!(refinement_study(e, h(0.5), &[1.0, 0.3], 400, 9).is_err());
    }

    #[test]
    fn refinement_finest_matches_unsubsampled_estimate() {
        let e = BarrierEvent::new(EventProcess::IfbmTwoSided, 1.0, 8.0).unwrap();
        let r = refinement_study(e, h(0.3), &[1.0, 0.5], 300, 2).unwrap();
        let direct = estimate_persistence(e, h(0.3), 0.5, 300, 2).unwrap();
        assert_eq!(r[1].p, direct.p);
    }

    #[test]
    fn degenerate_chain_is_well_formed() {
        let rep = verify_chain(h(0.5), 2, 200, 4).unwrap();
        assert!(rep.relations.contains_key("mean_identity"));
        assert!(rep.relations["telescoping"].pass);
        let json = rep.to_json();
        assert!(json["relations"]["trended_persistence_bound"]["right"].is_number());
    }

    #[test]
    fn relation_semantics() {
        assert!(RelationCheck::new(Relation::AtMost, 1.0, 0.9, 0.03).pass);
        assert!(!RelationCheck::new(Relation::AtMost, 1.0, 0.8, 0.03).pass);
        assert!(RelationCheck::new(Relation::AtLeast, 0.9, 1.0, 0.03).pass);
        assert!(!RelationCheck::new(Relation::Equal, 0.0, 1.0, 0.1).pass);
        assert!(RelationCheck::exact(Relation::AtMost, 0.0, 1e-9, 0.0).pass);
    }
}
