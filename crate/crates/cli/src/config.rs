//! Run configuration: defaults per experiment, a `key = value` file, then
//! flag overrides. Every field is serialized into the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use burgerlab::persistence::{horizon_ladder, EventProcess};
use serde::{Deserialize, Serialize};

use crate::checks;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Sample,
    Solve,
    Dim,
    Persist,
    Chain,
    RkhsVerify,
    Check,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Sample,
        Experiment::Solve,
        Experiment::Dim,
        Experiment::Persist,
        Experiment::Chain,
        Experiment::RkhsVerify,
        Experiment::Check,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Sample => "sample",
            Experiment::Solve => "solve",
            Experiment::Dim => "dim",
            Experiment::Persist => "persist",
            Experiment::Chain => "chain",
            Experiment::RkhsVerify => "rkhs-verify",
            Experiment::Check => "check",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendKind {
    Psi,
    Phi1,
    Phi2,
    Combined,
    /// A tenth of the covariance column at `x = 1`.
    Column,
}

impl TrendKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "psi" => Some(TrendKind::Psi),
            "phi1" => Some(TrendKind::Phi1),
            "phi2" => Some(TrendKind::Phi2),
            "combined" => Some(TrendKind::Combined),
            "column" => Some(TrendKind::Column),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Exact,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub hurst: Vec<f64>,
    /// Horizon ladder (`persist`), half width (`sample`, `solve`, `dim`,
    /// `rkhs-verify`) or `N` (`chain`).
    pub horizon: Vec<f64>,
    pub spacing: f64,
    pub replicas: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub level: f64,
    pub event: EventProcess,
    /// Grid cells for `dim`.
    pub points: usize,
    pub time: f64,
    pub offset: f64,
    pub trend: TrendKind,
    pub sampler: SamplerKind,
    pub check: bool,
    pub only: Vec<String>,
    pub target: Option<f64>,
}

/// A diagnostic naming where a bad value came from and which field it is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub origin: String,
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(origin: impl Into<String>, field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError { origin: origin.into(), field: field.into(), reason: reason.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: field `{}`: {}", self.origin, self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

/// One `key = value` assignment and where it was written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub origin: String,
    pub key: String,
    pub value: String,
}

pub const KEYS: [&str; 17] = [
    "experiment", "hurst", "horizon", "spacing", "replicas", "seed", "out", "level", "event",
    "points", "time", "offset", "trend", "sampler", "check", "only", "target",
];

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = RunConfig {
            experiment,
            hurst: vec![0.5],
            horizon: vec![1.0],
            spacing: 1.0 / 1024.0,
            replicas: 1,
            seed: 1,
            out: PathBuf::from(format!("runs/{}-1", experiment.name())),
            level: 1.0,
            event: EventProcess::FbmMax,
            points: 1 << 16,
            time: 1.0,
            offset: 0.0,
            trend: TrendKind::Combined,
            sampler: SamplerKind::Fast,
            check: experiment == Experiment::Check,
            only: Vec::new(),
            target: None,
        };
        match experiment {
            Experiment::Sample | Experiment::Solve => {}
            Experiment::Check => c.hurst = vec![0.3, 0.5, 0.7],
            Experiment::Dim => c.replicas = 50,
            Experiment::Persist => {
                c.horizon = horizon_ladder(64.0, 1024.0);
                c.spacing = 1.0;
                c.replicas = 10_000;
            }
            Experiment::Chain => {
                c.horizon = vec![64.0];
                c.spacing = 1.0;
                c.replicas = 10_000;
            }
            Experiment::RkhsVerify => {
                c.horizon = vec![2.0];
                c.spacing = 0.125;
                c.level = 2.0;
                c.replicas = 1_000_000;
            }
        }
        c
    }

    /// Apply assignments in order; later ones win.
    pub fn build(
        experiment: Experiment,
        base: Option<RunConfig>,
        settings: &[Setting],
    ) -> Result<RunConfig, ConfigError> {
        let replay = base.is_some();
        let mut c = base.unwrap_or_else(|| RunConfig::defaults(experiment));
        if c.experiment != experiment {
            return Err(ConfigError::new(
                "manifest",
                "experiment",
                format!("records `{}`, not `{}`", c.experiment.name(), experiment.name()),
            ));
        }
        let mut origins: BTreeMap<&str, &str> = BTreeMap::new();
        let mut out_set = false;
        for s in settings {
            c.set(&s.key, &s.value).map_err(|r| ConfigError::new(&s.origin, &s.key, r))?;
            if let Some(k) = KEYS.iter().find(|k| **k == s.key) {
                origins.insert(k, s.origin.as_str());
            }
            out_set |= s.key == "out";
        }
        if !out_set && !replay {
            c.out = PathBuf::from(format!("runs/{}-{}", experiment.name(), c.seed));
        }
        c.validate().map_err(|(field, reason)| {
            let origin = origins.get(field).copied().unwrap_or("default");
            ConfigError::new(origin, field, reason)
        })?;
        Ok(c)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "experiment" => {
                let e = Experiment::parse(v).ok_or_else(|| format!("unknown experiment `{v}`"))?;
                if e != self.experiment {
                    return Err(format!("`{v}` does not match the subcommand `{}`", self.experiment.name()));
                }
            }
            "hurst" => self.hurst = parse_list(v)?,
            "horizon" => self.horizon = parse_horizon(v)?,
            "spacing" => self.spacing = parse_f64(v)?,
            "replicas" => self.replicas = parse_count(v)?,
            "seed" => self.seed = v.parse().map_err(|_| format!("`{v}` is not an unsigned 64-bit integer"))?,
            "out" => {
                if v.is_empty() {
                    return Err("empty path".into());
                }
                self.out = PathBuf::from(v);
            }
            "level" => self.level = parse_f64(v)?,
            "event" => self.event = EventProcess::parse(v).ok_or_else(|| format!("unknown event `{v}`"))?,
            "points" => self.points = parse_count(v)?,
            "time" => self.time = parse_f64(v)?,
            "offset" => self.offset = parse_f64(v)?,
            "trend" => self.trend = TrendKind::parse(v).ok_or_else(|| format!("unknown trend `{v}`"))?,
            "sampler" => {
                self.sampler = match v {
                    "exact" => SamplerKind::Exact,
                    "fast" => SamplerKind::Fast,
                    _ => return Err(format!("unknown sampler `{v}` (exact or fast)")),
                }
            }
            "check" => {
                self.check = match v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("`{v}` is not a boolean")),
                }
            }
            "only" => {
                self.only = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
            }
            "target" => self.target = Some(parse_f64(v)?),
            _ => return Err(format!("unknown key (expected one of {})", KEYS.join(", "))),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        let positive = |field: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err((field, format!("must be positive and finite, got {x}")))
            }
        };
        if self.hurst.is_empty() {
            return Err(("hurst", "empty list".into()));
        }
        if let Some(h) = self.hurst.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return Err(("hurst", format!("must lie strictly between 0 and 1, got {h}")));
        }
        positive("spacing", self.spacing)?;
        positive("time", self.time)?;
        if self.horizon.is_empty() {
            return Err(("horizon", "empty list".into()));
        }
        for &t in &self.horizon {
            positive("horizon", t)?;
        }
        if !self.level.is_finite() {
            return Err(("level", "must be finite".into()));
        }
        if !self.offset.is_finite() {
            return Err(("offset", "must be finite".into()));
        }
        if self.target.is_some_and(|t| !t.is_finite()) {
            return Err(("target", "must be finite".into()));
        }
        if self.replicas == 0 {
            return Err(("replicas", "must be at least 1".into()));
        }
        let cells = |half: f64| -> Result<usize, (&'static str, String)> {
            let k = half / self.spacing;
            if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                return Err(("horizon", format!("{half} is not a multiple of the spacing {}", self.spacing)));
            }
            Ok(2 * k.round() as usize + 1)
        };
        match self.experiment {
            Experiment::Sample | Experiment::Solve => {
                if self.horizon.len() != 1 {
                    return Err(("horizon", "expects a single half width".into()));
                }
                let n = cells(self.horizon[0])?;
                if n > 1 << 22 {
                    return Err(("spacing", format!("{n} grid points exceed 2^22")));
                }
                if self.experiment == Experiment::Sample && self.sampler == SamplerKind::Exact && n > 4096 {
                    return Err(("sampler", format!("exact sampler is limited to 4096 points, grid has {n}")));
                }
                if self.replicas > 1000 {
                    return Err(("replicas", "at most 1000 paths are written per run".into()));
                }
            }
            Experiment::Dim => {
                if self.points < 16 || !self.points.is_multiple_of(2) || self.points > 1 << 22 {
                    return Err(("points", format!("need an even count in [16, 2^22], got {}", self.points)));
                }
                if self.horizon.len() != 1 {
                    return Err(("horizon", "expects a single half width".into()));
                }
            }
            Experiment::Persist => {
                if let Some(t) = self.horizon.iter().find(|t| **t <= 1.0) {
                    return Err(("horizon", format!("horizons must exceed 1, got {t}")));
                }
                if self.spacing > 1.0 {
                    return Err(("spacing", "must not exceed 1".into()));
                }
                if self.replicas < 100 {
                    return Err(("replicas", "need at least 100".into()));
                }
            }
            Experiment::Chain => {
                if let Some(t) = self.horizon.iter().find(|t| t.fract() != 0.0 || **t < 2.0) {
                    return Err(("horizon", format!("N must be an integer >= 2, got {t}")));
                }
                if self.replicas < 2 {
                    return Err(("replicas", "need at least 2".into()));
                }
            }
            Experiment::RkhsVerify => {
                if self.horizon.len() != 1 || self.horizon[0] < 2.0 {
                    return Err(("horizon", "expects a single half width >= 2".into()));
                }
                let n = cells(self.horizon[0])?;
                if n > burgerlab::rkhs::MAX_VERIFY_COUNT {
                    return Err(("spacing", format!("{n} grid points exceed {}", burgerlab::rkhs::MAX_VERIFY_COUNT)));
                }
                if (1.0 / self.spacing - (1.0 / self.spacing).round()).abs() > 1e-9 {
                    return Err(("spacing", "grid must contain x = 1".into()));
                }
                if self.replicas < 100 {
                    return Err(("replicas", "need at least 100".into()));
                }
            }
            Experiment::Check => {
                checks::select(&self.only).map_err(|r| ("only", r))?;
            }
        }
        Ok(())
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(x)
}

fn parse_count(v: &str) -> Result<usize, String> {
    v.replace('_', "").parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

/// `a..b` is the doubling ladder from `a` to `b`; otherwise a comma list.
fn parse_horizon(v: &str) -> Result<Vec<f64>, String> {
    match v.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse_f64(a.trim())?, parse_f64(b.trim())?);
            if !(a > 0.0 && b >= a) {
                return Err(format!("bad ladder `{v}`"));
            }
            Ok(horizon_ladder(a, b))
        }
        None => parse_list(v),
    }
}

/// `key = value` lines; `#` starts a comment. Keys may appear once.
pub fn parse_config_text(text: &str, name: &str) -> Result<Vec<Setting>, ConfigError> {
    let mut out: Vec<Setting> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = format!("{name}:{}", i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(&origin, line, "expected `key = value`"))?;
        let key = k.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::new(&origin, &key, "unknown key"));
        }
        if out.iter().any(|s| s.key == key) {
            return Err(ConfigError::new(&origin, &key, "duplicate key"));
        }
        out.push(Setting { origin, key, value: v.trim().to_string() });
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<Setting>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(path.display().to_string(), "config", e.to_string()))?;
    parse_config_text(&text, &path.display().to_string())
}

/// The configuration recorded in a run manifest.
pub fn read_manifest_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(&origin, "manifest", e.to_string()))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ConfigError::new(&origin, "manifest", e.to_string()))?;
    let config = v.get("config").cloned().ok_or_else(|| ConfigError::new(&origin, "config", "missing"))?;
    serde_json::from_value(config).map_err(|e| ConfigError::new(&origin, "config", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flag(key: &str, value: &str) -> Setting {
        Setting { origin: format!("--{key}"), key: key.into(), value: value.into() }
    }

    #[test]
    fn file_then_flags() {
        let file = parse_config_text("# persistence\nhurst = 0.3, 0.7\nreplicas = 500\n", "run.cfg").unwrap();
        let mut settings = file;
        settings.push(flag("replicas", "2000"));
        let c = RunConfig::build(Experiment::Persist, None, &settings).unwrap();
        assert_eq!(c.hurst, vec![0.3, 0.7]);
        assert_eq!(c.replicas, 2000);
        assert_eq!(c.horizon, vec![64.0, 128.0, 256.0, 512.0, 1024.0]);
        assert_eq!(c.out, PathBuf::from("runs/persist-1"));
    }

    #[test]
    fn diagnostics_name_field_and_line() {
        let file = parse_config_text("hurst = 0.5\n\nspacing = -1\n", "bad.cfg").unwrap();
        let e = RunConfig::build(Experiment::Persist, None, &file).unwrap_err();
        assert_eq!(e.field, "spacing");
        assert_eq!(e.origin, "bad.cfg:3");
        let e = RunConfig::build(Experiment::Sample, None, &[flag("spacing", "0")]).unwrap_err();
        assert_eq!((e.field.as_str(), e.origin.as_str()), ("spacing", "--spacing"));
        let e = parse_config_text("hurst 0.5\n", "x").unwrap_err();
        assert_eq!(e.origin, "x:1");
        assert!(parse_config_text("colour = red\n", "x").is_err());
        assert!(parse_config_text("seed = 1\nseed = 2\n", "x").is_err());
        assert!(RunConfig::build(Experiment::Dim, None, &[flag("hurst", "1.0")]).is_err());
        assert!(RunConfig::build(Experiment::Dim, None, &[flag("experiment", "chain")]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let c = RunConfig::build(Experiment::RkhsVerify, None, &[flag("hurst", "0.1,0.3")]).unwrap();
        let text = serde_json::to_string(&serde_json::json!({ "config": c })).unwrap();
        let back: RunConfig =
            serde_json::from_value(serde_json::from_str::<serde_json::Value>(&text).unwrap()["config"].clone())
                .unwrap();
        assert_eq!(back, c);
    }
}
