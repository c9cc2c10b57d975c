//! Batch front end: each subcommand runs one experiment into a write-once
//! directory holding `results.jsonl`, CSV tables and `manifest.json`.
//!
//! Exit status: 0 success, 1 configuration error, 2 numerical failure or
//! flagged estimates, 3 failed acceptance check (with `--check`).

pub mod checks;
pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, Experiment, RunConfig, Setting};

/// Caps the number of worker threads.
pub const WORKERS_ENV: &str = "BURGERLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "burgerlab", version, about = "Burgers equation with fBm initial velocity: numerical experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample fBm paths and their integrals.
    Sample(Flags),
    /// Solve the Burgers equation through the convex minorant and compare with sticky particles.
    Solve(Flags),
    /// Box-counting dimension of the regular Lagrangian points.
    Dim(Flags),
    /// Persistence probabilities over a horizon ladder and the fitted exponent.
    Persist(Flags),
    /// Identities and inequalities of the slope functional.
    Chain(Flags),
    /// Shift bound for kernel-space trends.
    #[command(name = "rkhs-verify")]
    RkhsVerify(Flags),
    /// Run the acceptance checks.
    Check(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Comma-separated H values.
    #[arg(long)]
    hurst: Option<String>,
    /// Comma list or doubling ladder `a..b`.
    #[arg(long)]
    horizon: Option<String>,
    #[arg(long)]
    spacing: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Run directory; must not already hold a run.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    level: Option<String>,
    /// fbm_max, ifbm_two_sided, ifbm_punctured, ifbm_trended, ifbm_one_sided.
    #[arg(long)]
    event: Option<String>,
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    time: Option<String>,
    #[arg(long)]
    offset: Option<String>,
    /// psi, phi1, phi2, combined, column.
    #[arg(long)]
    trend: Option<String>,
    /// exact or fast.
    #[arg(long)]
    sampler: Option<String>,
    /// Evaluate the experiment's acceptance criterion; failure exits with 3.
    #[arg(long)]
    check: bool,
    /// Checks to run, by name or number.
    #[arg(long)]
    only: Option<String>,
    /// Override the target of the exponent and dimension criteria.
    #[arg(long)]
    target: Option<String>,
}

impl Flags {
    fn settings(&self) -> Vec<Setting> {
        let pairs = [
            ("hurst", &self.hurst),
            ("horizon", &self.horizon),
            ("spacing", &self.spacing),
            ("replicas", &self.replicas),
            ("seed", &self.seed),
            ("out", &self.out),
            ("level", &self.level),
            ("event", &self.event),
            ("points", &self.points),
            ("time", &self.time),
            ("offset", &self.offset),
            ("trend", &self.trend),
            ("sampler", &self.sampler),
            ("only", &self.only),
            ("target", &self.target),
        ];
        let mut out: Vec<Setting> = pairs
            .into_iter()
            .filter_map(|(k, v)| {
                v.as_ref().map(|v| Setting { origin: format!("--{k}"), key: k.into(), value: v.clone() })
            })
            .collect();
        if self.check {
            out.push(Setting { origin: "--check".into(), key: "check".into(), value: "true".into() });
        }
        out
    }
}

fn configure(experiment: Experiment, flags: &Flags) -> Result<RunConfig, ConfigError> {
    let mut settings = Vec::new();
    let mut base = None;
    if let Some(path) = &flags.config {
        settings = config::read_config_file(path)?;
    }
    if let Some(path) = &flags.manifest {
        base = Some(config::read_manifest_config(path)?);
    }
    settings.extend(flags.settings());
    RunConfig::build(experiment, base, &settings)
}

fn cap_workers() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::new(WORKERS_ENV, "workers", format!("`{v}` is not a positive integer")))?;
    // A second call in the same process finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parse arguments, run, and return the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let (experiment, flags) = match &cli.command {
        Command::Sample(f) => (Experiment::Sample, f),
        Command::Solve(f) => (Experiment::Solve, f),
        Command::Dim(f) => (Experiment::Dim, f),
        Command::Persist(f) => (Experiment::Persist, f),
        Command::Chain(f) => (Experiment::Chain, f),
        Command::RkhsVerify(f) => (Experiment::RkhsVerify, f),
        Command::Check(f) => (Experiment::Check, f),
    };
    let config = match cap_workers().and_then(|_| configure(experiment, flags)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("burgerlab: configuration error: {e}");
            return 1;
        }
    };
    match experiments::run(&config) {
        Ok(outcome) => {
            for f in &outcome.flagged {
                eprintln!("burgerlab: flagged: {f}");
            }
            let status = match (outcome.checked, outcome.pass) {
                (true, Some(true)) => "check passed",
                (true, Some(false)) => "check FAILED",
                (true, None) => "no criterion for this experiment",
                (false, _) => "done",
            };
            eprintln!(
                "burgerlab: {status}: {} records in {}",
                outcome.records,
                outcome.dir.display()
            );
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("burgerlab: {e}");
            e.exit_code()
        }
    }
}
