//! Acceptance criteria at desk scale. Settings and seeds are pinned so every
//! outcome is reproducible.

use std::path::PathBuf;

use burgerlab::burgers::{compare_clusters, contact_dimension, solve, sticky_clusters, ParticleSystem};
use burgerlab::envelopes::{functional_f, functional_f_endpoints};
use burgerlab::paths::{
    cumulative_trapezoid, fbm_covariance, ExactSampler, FastSampler, HurstIndex, SampleGrid,
};
use burgerlab::persistence::{
    estimate_persistence_ladder, exponent_fit, horizon_ladder, verify_chain, EventProcess,
};
use burgerlab::rkhs::{build_space, combined_trend, psi_trend, rkhs_norm, verify_shift_inequality};
use burgerlab::stats::{covariance_with_se, ks_critical_1pct, ks_statistic, replica_map};
use burgerlab::RandomnessSpec;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Experiment, RunConfig, Setting};
use crate::experiments::{run, seed_for};
use crate::output::{same_outputs, MANIFEST};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSpec {
    pub id: u32,
    pub name: &'static str,
    pub summary: &'static str,
}

pub const CHECKS: [CheckSpec; 12] = [
    CheckSpec { id: 1, name: "sampler-covariance", summary: "exact sampler covariance within 4 SE on 8 points" },
    CheckSpec { id: 2, name: "sampler-equivalence", summary: "KS of exact vs fast path maxima below the 1% value" },
    CheckSpec { id: 3, name: "telescoping", summary: "slope functional equals its endpoint form to 1e-9" },
    CheckSpec { id: 4, name: "mean-identity", summary: "E F = 2 E max of window averages, H = 0.5" },
    CheckSpec { id: 5, name: "inequality-chain", summary: "bounds linking F, slope gaps and trended persistence" },
    CheckSpec { id: 6, name: "sticky-particles", summary: "sticky clusters match minorant shocks within one cell" },
    CheckSpec { id: 7, name: "dimension", summary: "box-counting slope of regular points within 0.1 of H" },
    CheckSpec { id: 8, name: "fbm-exponent", summary: "fBm persistence exponent within 0.07 of 1 - H" },
    CheckSpec { id: 9, name: "one-sided-exponent", summary: "integrated BM one-sided exponent within 0.08 of 1/4" },
    CheckSpec { id: 10, name: "two-sided-exponent", summary: "two-sided exponent >= 1 - H - 0.15; punctured ordering" },
    CheckSpec { id: 11, name: "rkhs-suite", summary: "reproducing property, trend composition, shift bound" },
    CheckSpec { id: 12, name: "determinism", summary: "manifest re-runs reproduce outputs byte for byte" },
];

/// Resolve names or numbers; an empty selection means every check.
pub fn select(only: &[String]) -> Result<Vec<&'static CheckSpec>, String> {
    if only.is_empty() {
        return Ok(CHECKS.iter().collect());
    }
    only.iter()
        .map(|s| {
            CHECKS
                .iter()
                .find(|c| c.name == s || c.id.to_string() == *s)
                .ok_or_else(|| {
                    let names: Vec<&str> = CHECKS.iter().map(|c| c.name).collect();
                    format!("unknown check `{s}` (known: {})", names.join(", "))
                })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CheckContext {
    /// H values for the criteria that sweep H.
    pub hurst: Vec<f64>,
    /// Replaces the target value of the exponent and dimension criteria.
    pub target: Option<f64>,
    /// Directory for the nested runs of the determinism check.
    pub scratch: PathBuf,
    pub seed: u64,
}

impl CheckContext {
    pub fn new(scratch: PathBuf) -> Self {
        CheckContext { hurst: vec![0.3, 0.5, 0.7], target: None, scratch, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: Value,
}

type Checked = Result<(bool, Value), String>;

fn h(v: f64) -> Result<HurstIndex, String> {
    HurstIndex::new(v).map_err(|e| e.to_string())
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run_check(spec: &CheckSpec, ctx: &CheckContext) -> CheckOutcome {
    let seed = ctx.seed;
    let result = match spec.id {
        1 => sampler_covariance(ctx, seed),
        2 => sampler_equivalence(ctx, seed),
        3 => telescoping(ctx, seed),
        4 => mean_identity(seed),
        5 => inequality_chain(ctx, seed),
        6 => sticky_particles(ctx, seed),
        7 => dimension(ctx, seed),
        8 => fbm_exponent(ctx, seed),
        9 => one_sided_exponent(ctx, seed),
        10 => two_sided_exponent(ctx, seed),
        11 => rkhs_suite(ctx, seed),
        12 => determinism(ctx, seed),
        _ => Err(format!("no check with id {}", spec.id)),
    };
    let (pass, detail) = result.unwrap_or_else(|e| (false, json!({ "error": e })));
    CheckOutcome { id: spec.id, name: spec.name, pass, detail }
}

fn column(paths: &[Vec<f64>], i: usize) -> Vec<f64> {
    paths.iter().map(|p| p[i]).collect()
}

fn sampler_covariance(ctx: &CheckContext, seed: u64) -> Checked {
    let grid = SampleGrid::anchored(3, 4, 0.5).map_err(err)?;
    let xs = grid.coordinates();
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let sampler = ExactSampler::new(h(hv)?, grid).map_err(err)?;
        let base = RandomnessSpec::new(seed_for(seed, hv), 0);
        let paths = replica_map(10_000, |r| sampler.sample(base.with_replica(r)).into_values());
        let (mut worst, mut failures) = (0.0f64, 0);
        for i in 0..xs.len() {
            for j in 0..=i {
                let (c, se) = covariance_with_se(&column(&paths, i), &column(&paths, j));
                let dev = (c - fbm_covariance(h(hv)?, xs[i], xs[j])).abs();
                if dev > 4.0 * se + 1e-12 {
                    failures += 1;
                }
                if se > 0.0 {
                    worst = worst.max(dev / se);
                }
            }
        }
        pass &= failures == 0;
        detail.push(json!({ "H": hv, "max_z": worst, "entries_outside_4se": failures }));
    }
    Ok((pass, json!(detail)))
}

fn path_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn sampler_equivalence(ctx: &CheckContext, seed: u64) -> Checked {
    let grid = SampleGrid::anchored(0, 63, 1.0 / 63.0).map_err(err)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let exact = ExactSampler::new(h(hv)?, grid).map_err(err)?;
        let fast = FastSampler::new(h(hv)?, grid).map_err(err)?;
        let s = seed_for(seed, hv);
        let a = replica_map(10_000, |r| path_max(exact.sample(RandomnessSpec::new(s, r)).values()));
        let b = replica_map(10_000, |r| path_max(fast.sample(RandomnessSpec::new(s ^ 1, r)).values()));
        let d = ks_statistic(&a, &b);
        let crit = ks_critical_1pct(a.len(), b.len());
        pass &= d < crit;
        detail.push(json!({ "H": hv, "ks": d, "critical_1pct": crit }));
    }
    Ok((pass, json!(detail)))
}

fn telescoping(ctx: &CheckContext, seed: u64) -> Checked {
    let grid = SampleGrid::anchored(0, 255, 1.0).map_err(err)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let sampler = FastSampler::new(h(hv)?, grid).map_err(err)?;
        let base = RandomnessSpec::new(seed_for(seed, hv), 0);
        let worst = replica_map(1000, |r| {
            let w = sampler.sample(base.with_replica(r)).into_values();
            let i = cumulative_trapezoid(&w, 1.0, 0);
            let (f, e) = (functional_f(&i), functional_f_endpoints(&i));
            let scale = f.abs().max(e.abs());
            if scale == 0.0 {
                0.0
            } else {
                (f - e).abs() / scale
            }
        })
        .into_iter()
        .fold(0.0, f64::max);
        pass &= worst <= 1e-9;
        detail.push(json!({ "H": hv, "sequences": 1000, "length": 256, "max_relative_error": worst }));
    }
    Ok((pass, json!(detail)))
}

fn mean_identity(seed: u64) -> Checked {
    let r = verify_chain(h(0.5)?, 64, 10_000, seed_for(seed, 0.5)).map_err(err)?;
    let rel = r.relations.get("mean_identity").ok_or("relation missing")?;
    Ok((rel.pass, json!({ "H": 0.5, "N": 64, "replicas": 10_000, "relation": rel })))
}

fn inequality_chain(ctx: &CheckContext, seed: u64) -> Checked {
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let r = verify_chain(h(hv)?, 64, 10_000, seed_for(seed, hv)).map_err(err)?;
        pass &= r.all_pass();
        detail.push(r.to_json());
    }
    Ok((pass, json!(detail)))
}

fn sticky_particles(ctx: &CheckContext, seed: u64) -> Checked {
    let grid = SampleGrid::anchored(64, 64, 1.0 / 64.0).map_err(err)?;
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let sampler = FastSampler::new(h(hv)?, grid).map_err(err)?;
        let base = RandomnessSpec::new(seed_for(seed, hv), 0);
        let (mut agree, mut worst, mut drift) = (0, 0, 0.0f64);
        for r in 0..20 {
            let u0 = sampler.sample(base.with_replica(r));
            let sol = solve(&u0, 1.0).map_err(err)?;
            let system = ParticleSystem::from_cells(&u0).map_err(err)?;
            let clusters = sticky_clusters(&system, 1.0).map_err(err)?;
            let a = compare_clusters(&sol, &clusters, 1);
            agree += usize::from(a.agrees());
            worst = worst.max(a.max_boundary_offset);
            let momentum: f64 = clusters.iter().map(|c| c.momentum).sum();
            drift = drift.max((momentum - system.total_momentum()).abs());
        }
        pass &= agree == 20 && drift <= 1e-9;
        detail.push(json!({
            "H": hv, "particles": 128, "paths": 20, "agreeing": agree,
            "max_boundary_offset_cells": worst, "max_momentum_drift": drift,
        }));
    }
    Ok((pass, json!(detail)))
}

fn dimension(ctx: &CheckContext, seed: u64) -> Checked {
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let s = contact_dimension(h(hv)?, 1 << 16, 1.0, 1.0, 50, seed_for(seed, hv)).map_err(err)?;
        let target = ctx.target.unwrap_or(hv);
        let ok = (s.mean.mean - target).abs() <= 0.1;
        pass &= ok;
        detail.push(json!({
            "H": hv, "slope": s.mean.mean, "se": s.mean.se, "replicas": 50, "used": s.used(),
            "target": target, "pass": ok,
        }));
    }
    Ok((pass, json!(detail)))
}

struct ExponentRun {
    event: EventProcess,
    level: f64,
    from: f64,
    to: f64,
    replicas: usize,
}

// (horizon, p, se) per rung of the ladder.
type Ladder = Vec<(f64, f64, f64)>;

fn exponent(run: &ExponentRun, hv: f64, seed: u64) -> Result<(f64, Option<f64>, Ladder), String> {
    let ests = estimate_persistence_ladder(
        run.event,
        run.level,
        &horizon_ladder(run.from, run.to),
        h(hv)?,
        1.0,
        run.replicas,
        seed_for(seed, hv),
    )
    .map_err(err)?;
    let fit = exponent_fit(&ests).map_err(err)?;
    Ok((fit.exponent(), fit.fit.slope_se, ests.iter().map(|e| (e.horizon, e.p, e.se)).collect()))
}

fn fbm_exponent(ctx: &CheckContext, seed: u64) -> Checked {
    let run = ExponentRun { event: EventProcess::FbmMax, level: 0.0, from: 64.0, to: 1024.0, replicas: 50_000 };
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let (theta, se, ps) = exponent(&run, hv, seed)?;
        let target = ctx.target.unwrap_or(1.0 - hv);
        let ok = (theta - target).abs() <= 0.07;
        pass &= ok;
        detail.push(json!({ "H": hv, "exponent": theta, "se": se, "target": target, "estimates": ps, "pass": ok }));
    }
    Ok((pass, json!(detail)))
}

fn one_sided_exponent(ctx: &CheckContext, seed: u64) -> Checked {
    let run = ExponentRun { event: EventProcess::IfbmOneSided, level: 1.0, from: 64.0, to: 512.0, replicas: 20_000 };
    let (theta, se, ps) = exponent(&run, 0.5, seed)?;
    let target = ctx.target.unwrap_or(0.25);
    let ok = (theta - target).abs() <= 0.08;
    Ok((ok, json!({ "H": 0.5, "exponent": theta, "se": se, "target": target, "estimates": ps })))
}

const ORDERING_SPACING: f64 = 0.25;

fn two_sided_exponent(ctx: &CheckContext, seed: u64) -> Checked {
    let run = ExponentRun { event: EventProcess::IfbmTwoSided, level: 1.0, from: 64.0, to: 1024.0, replicas: 20_000 };
    let mut pass = true;
    let mut detail = Vec::new();
    for &hv in &ctx.hurst {
        let (theta, se, _) = exponent(&run, hv, seed)?;
        // At unit spacing the only grid point inside (-1, 1) is 0, where I
        // vanishes, and the two events coincide; compare on a finer grid.
        let ladder = |process| {
            estimate_persistence_ladder(
                process,
                run.level,
                &horizon_ladder(run.from, run.to),
                h(hv)?,
                ORDERING_SPACING,
                run.replicas,
                seed_for(seed, hv),
            )
            .map_err(err)
        };
        let full = ladder(EventProcess::IfbmTwoSided)?;
        let punctured = ladder(EventProcess::IfbmPunctured)?;
        let ordered = full.iter().zip(&punctured).all(|(f, p)| p.p >= f.p);
        let bound = ctx.target.unwrap_or(1.0 - hv) - 0.15;
        let ok = theta >= bound && ordered;
        pass &= ok;
        detail.push(json!({
            "H": hv, "exponent": theta, "se": se, "lower_bound": bound, "ordering_holds": ordered,
            "ordering_spacing": ORDERING_SPACING,
            "p_two_sided": full.iter().map(|e| e.p).collect::<Vec<_>>(),
            "p_punctured": punctured.iter().map(|e| e.p).collect::<Vec<_>>(),
            "pass": ok,
        }));
    }
    Ok((pass, json!(detail)))
}

/// `(H, spacing, trend, offset, level)` configurations of the shift bound.
const SHIFT_CONFIGS: [(f64, f64, &str, f64, f64); 7] = [
    (0.5, 0.125, "column", 0.0, 1.0),
    (0.3, 0.125, "column", 0.0, 1.0),
    (0.7, 0.25, "column", 0.0, 0.5),
    (0.5, 0.25, "psi", 0.0, 1.0),
    (0.5, 0.125, "combined", 0.0, 2.0),
    (0.5, 0.125, "combined", 1.0, 3.0),
    (0.7, 0.125, "combined", 0.0, 3.0),
];

fn rkhs_suite(ctx: &CheckContext, seed: u64) -> Checked {
    let grid = SampleGrid::symmetric(2.0, 0.125).map_err(err)?;
    let mut pass = true;
    let mut reproducing = Vec::new();
    let mut composition = Vec::new();
    for &hv in &ctx.hurst {
        let space = build_space(grid, h(hv)?).map_err(err)?;
        let mut worst = 0.0f64;
        for i in 0..grid.count() {
            let want = space.covariance(i, i).sqrt();
            let got = rkhs_norm(&space, &space.column(i)).map_err(err)?;
            if want > 0.0 {
                worst = worst.max((got - want).abs() / want);
            } else {
                worst = worst.max(got);
            }
        }
        pass &= worst <= 1e-8;
        reproducing.push(json!({ "H": hv, "max_relative_error": worst, "regularized": space.regularized() }));
        for a in [0.0, 1.0] {
            let phi = combined_trend(&space, a).map_err(err)?;
            let dev = grid
                .coordinates()
                .iter()
                .zip(&phi.values)
                .filter(|(x, _)| x.abs() >= 1.0)
                .map(|(x, v)| (v - (2.0 * x.abs() + a)).abs())
                .fold(0.0, f64::max);
            pass &= dev <= 1e-5;
            composition.push(json!({ "H": hv, "offset": a, "max_deviation": dev }));
        }
    }
    let mut shifts = Vec::new();
    for (k, &(hv, spacing, trend, a, level)) in SHIFT_CONFIGS.iter().enumerate() {
        let g = SampleGrid::symmetric(2.0, spacing).map_err(err)?;
        let space = build_space(g, h(hv)?).map_err(err)?;
        let phi = match trend {
            "column" => space.column(g.nearest_index(1.0)).iter().map(|v| 0.1 * v).collect(),
            "psi" => psi_trend(g).values,
            _ => combined_trend(&space, a).map_err(err)?.values,
        };
        let r = verify_shift_inequality(&space, &phi, level, 1_000_000, seed_for(seed, hv) ^ k as u64)
            .map_err(err)?;
        pass &= r.pass;
        shifts.push(json!({
            "H": hv, "spacing": spacing, "trend": trend, "offset": a, "report": r.to_json(),
        }));
    }
    Ok((pass, json!({ "reproducing": reproducing, "composition": composition, "shift_bound": shifts })))
}

fn small_configs(root: &std::path::Path, seed: u64) -> Vec<(Experiment, Vec<Setting>)> {
    let s = |k: &str, v: &str| Setting { origin: "determinism".into(), key: k.into(), value: v.into() };
    let out = |name: &str| s("out", &root.join(name).join("a").display().to_string());
    let seed = seed.to_string();
    vec![
        (Experiment::Sample, vec![s("hurst", "0.3,0.7"), s("spacing", "0.0625"), s("replicas", "2"), s("seed", &seed), out("sample")]),
        (Experiment::Solve, vec![s("hurst", "0.5"), s("spacing", "0.0078125"), s("replicas", "2"), s("seed", &seed), out("solve")]),
        (Experiment::Dim, vec![s("hurst", "0.5"), s("points", "4096"), s("replicas", "4"), s("seed", &seed), out("dim")]),
        (Experiment::Persist, vec![s("hurst", "0.5"), s("event", "ifbm_two_sided"), s("horizon", "8..32"), s("replicas", "500"), s("seed", &seed), out("persist")]),
        (Experiment::Chain, vec![s("hurst", "0.7"), s("horizon", "16"), s("replicas", "200"), s("seed", &seed), out("chain")]),
        (Experiment::RkhsVerify, vec![s("hurst", "0.5"), s("spacing", "0.25"), s("replicas", "10000"), s("seed", &seed), out("rkhs")]),
    ]
}

fn determinism(ctx: &CheckContext, seed: u64) -> Checked {
    let mut pass = true;
    let mut detail = Vec::new();
    for (experiment, settings) in small_configs(&ctx.scratch, seed) {
        let first = RunConfig::build(experiment, None, &settings).map_err(err)?;
        run(&first).map_err(err)?;
        let mut second = first.clone();
        second.out = first.out.with_file_name("b");
        run(&second).map_err(err)?;
        let replay_settings = [Setting {
            origin: "determinism".into(),
            key: "out".into(),
            value: first.out.with_file_name("c").display().to_string(),
        }];
        let recorded = crate::config::read_manifest_config(&first.out.join(MANIFEST)).map_err(err)?;
        let replay = RunConfig::build(experiment, Some(recorded), &replay_settings).map_err(err)?;
        run(&replay).map_err(err)?;
        let same_seed = same_outputs(&first.out, &second.out).map_err(err)?;
        let from_manifest = same_outputs(&first.out, &replay.out).map_err(err)?;
        pass &= same_seed && from_manifest;
        detail.push(json!({
            "experiment": experiment.name(), "same_seed_identical": same_seed,
            "manifest_replay_identical": from_manifest,
        }));
    }
    Ok((pass, json!(detail)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selection_by_name_or_number() {
        assert_eq!(select(&[]).unwrap().len(), 12);
        let s = select(&["dimension".into(), "3".into()]).unwrap();
        assert_eq!(s.iter().map(|c| c.id).collect::<Vec<_>>(), vec![7, 3]);
        assert!(select(&["nope".into()]).is_err());
    }

    #[test]
    fn ids_are_sequential() {
        for (i, c) in CHECKS.iter().enumerate() {
            assert_eq!(c.id as usize, i + 1);
        }
    }
}
