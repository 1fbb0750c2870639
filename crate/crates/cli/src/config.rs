//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Command-line flags are
//! applied after the file, so they win.

use std::fs;
use std::path::{Path, PathBuf};

use harmwatch::calibration::GridSpec;
use harmwatch::harness::HarnessConfig;
use harmwatch::monitor::MonitorConfig;
use harmwatch::shiftsim::{FeatureKind, Schedule, ScheduleKind};
use harmwatch::synthetic::{FeatureSplitBench, SubgroupFailure};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("`{key}`: file {path} does not exist")]
    MissingFile { key: String, path: PathBuf },
    #[error("cannot read config {path}: {msg}")]
    Read { path: PathBuf, msg: String },
}

#[cfg(test)]
impl ConfigError {
    /// The offending key, when the error concerns one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key }
            | ConfigError::Invalid { key, .. }
            | ConfigError::MissingFile { key, .. } => Some(key),
            _ => None,
        }
    }
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Bench,
    Subgroup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    None,
    Sudden,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppConfig {
    pub source: Option<PathBuf>,
    /// Production CSV; `-` reads stdin.
    pub production: Option<PathBuf>,
    /// CSV with a `score` column aligned with the source rows.
    pub scores: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub k: usize,
    pub fdp_max: f64,
    pub alpha_source: f64,
    pub alpha_prod: f64,
    pub alpha_split: f64,
    pub eps_tol: f64,
    pub delta_corr: f64,
    pub schedule: ScheduleName,
    /// Sudden onset or sigmoid midpoint; defaults to half the horizon.
    pub onset: Option<u64>,
    pub horizon: u64,
    pub seed: u64,
    pub repetitions: usize,
    /// 0 uses every available core.
    pub workers: usize,
    /// Per-feature kinds; defaults to all continuous.
    pub feature_kinds: Option<Vec<FeatureKind>>,
    pub eps_harm: f64,
    pub eps_harm_grid: Vec<f64>,
    pub eps_tol_grid: Vec<f64>,
    pub generator: Option<Generator>,
    pub generator_n: usize,
    pub trajectories: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            source: None,
            production: None,
            scores: None,
            output_dir: PathBuf::from("out"),
            k: 10,
            fdp_max: 0.2,
            alpha_source: 0.05,
            alpha_prod: 0.05,
            alpha_split: 0.5,
            eps_tol: 0.0,
            delta_corr: 0.0,
            schedule: ScheduleName::Sudden,
            onset: None,
            horizon: 4000,
            seed: 0,
            repetitions: 1,
            workers: 0,
            feature_kinds: None,
            eps_harm: 0.0,
            eps_harm_grid: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            eps_tol_grid: vec![0.0, 0.01, 0.02, 0.05, 0.1],
            generator: None,
            generator_n: 20_000,
            trajectories: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "source",
    "production",
    "scores",
    "output_dir",
    "k",
    "fdp_max",
    "alpha_source",
    "alpha_prod",
    "alpha_split",
    "eps_tol",
    "delta_corr",
    "schedule",
    "onset",
    "horizon",
    "seed",
    "repetitions",
    "workers",
    "feature_kinds",
    "eps_harm",
    "eps_harm_grid",
    "eps_tol_grid",
    "generator",
    "generator_n",
    "trajectories",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| invalid(key, format!("cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl AppConfig {
    /// Sets one key from its textual value. Range checks happen in
    /// [`AppConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "source" => self.source = Some(PathBuf::from(v)),
            "production" => self.production = Some(PathBuf::from(v)),
            "scores" => self.scores = Some(PathBuf::from(v)),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "k" => self.k = num(key, v)?,
            "fdp_max" => self.fdp_max = num(key, v)?,
            "alpha_source" => self.alpha_source = num(key, v)?,
            "alpha_prod" => self.alpha_prod = num(key, v)?,
            "alpha_split" => self.alpha_split = num(key, v)?,
            "eps_tol" => self.eps_tol = num(key, v)?,
            "delta_corr" => self.delta_corr = num(key, v)?,
            "schedule" => {
                self.schedule = match v {
                    "none" => ScheduleName::None,
                    "sudden" => ScheduleName::Sudden,
                    "sigmoid" => ScheduleName::Sigmoid,
                    _ => return Err(invalid(key, "expected none, sudden or sigmoid")),
                }
            }
            "onset" => self.onset = Some(num(key, v)?),
            "horizon" => self.horizon = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "repetitions" => self.repetitions = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "feature_kinds" => {
                self.feature_kinds = Some(
                    v.split(',')
                        .map(|s| match s.trim() {
                            "continuous" | "c" => Ok(FeatureKind::Continuous),
                            "categorical" | "k" => Ok(FeatureKind::Categorical),
                            other => Err(invalid(key, format!("unknown feature kind `{other}`"))),
                        })
                        .collect::<Result<_, _>>()?,
                )
            }
            "eps_harm" => self.eps_harm = num(key, v)?,
            "eps_harm_grid" => self.eps_harm_grid = list(key, v)?,
            "eps_tol_grid" => self.eps_tol_grid = list(key, v)?,
            "generator" => {
                self.generator = match v {
                    "bench" => Some(Generator::Bench),
                    "subgroup" => Some(Generator::Subgroup),
                    _ => return Err(invalid(key, "expected bench or subgroup")),
                }
            }
            "generator_n" => self.generator_n = num(key, v)?,
            "trajectories" => {
                self.trajectories = match v {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(invalid(key, "expected true or false")),
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, a) in [
            ("alpha_source", self.alpha_source),
            ("alpha_prod", self.alpha_prod),
            ("alpha_split", self.alpha_split),
        ] {
            if !(a > 0.0 && a < 1.0) {
                return Err(invalid(key, "must lie in (0, 1)"));
            }
        }
        if !(self.fdp_max > 0.0 && self.fdp_max <= 1.0) {
            return Err(invalid("fdp_max", "must lie in (0, 1]"));
        }
        for (key, v) in [
            ("eps_tol", self.eps_tol),
            ("delta_corr", self.delta_corr),
            ("eps_harm", self.eps_harm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be a finite value >= 0"));
            }
        }
        for (key, grid) in [
            ("eps_harm_grid", &self.eps_harm_grid),
            ("eps_tol_grid", &self.eps_tol_grid),
        ] {
            if grid.is_empty() || grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(invalid(key, "must be a nonempty list of values >= 0"));
            }
        }
        if self.k == 0 {
            return Err(invalid("k", "must be positive"));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be positive"));
        }
        if let Some(t) = self.onset {
            if t == 0 || t > self.horizon {
                return Err(invalid("onset", "must lie in [1, horizon]"));
            }
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be positive"));
        }
        if self.generator_n == 0 {
            return Err(invalid("generator_n", "must be positive"));
        }
        for (key, path) in [("source", &self.source), ("scores", &self.scores)] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(ConfigError::MissingFile {
                        key: key.to_string(),
                        path: p.clone(),
                    });
                }
            }
        }
        if let Some(p) = &self.production {
            if p.as_os_str() != "-" && !p.exists() {
                return Err(ConfigError::MissingFile {
                    key: "production".into(),
                    path: p.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn monitor_config(&self) -> MonitorConfig {
        MonitorConfig {
            alpha_source: self.alpha_source,
            alpha_prod: self.alpha_prod,
            alpha_split: self.alpha_split,
            eps_tol: self.eps_tol,
            delta_corr: self.delta_corr,
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            fdp_max: self.fdp_max,
            ..GridSpec::default()
        }
    }

    pub fn schedule_spec(&self) -> Schedule {
        let onset = self.onset.unwrap_or((self.horizon / 2).max(1));
        let kind = match self.schedule {
            ScheduleName::None => ScheduleKind::None,
            ScheduleName::Sudden => ScheduleKind::Sudden { onset },
            ScheduleName::Sigmoid => ScheduleKind::Sigmoid { t0: onset },
        };
        Schedule {
            kind,
            horizon: self.horizon,
        }
    }

    pub fn harness_config(&self) -> HarnessConfig {
        HarnessConfig {
            grid: self.grid(),
            monitor: self.monitor_config(),
            k: self.k,
            schedule: self.schedule_spec(),
            eps_harm: self.eps_harm,
            keep_trajectories: self.trajectories,
            ..HarnessConfig::default()
        }
    }

    pub fn bench(&self) -> FeatureSplitBench {
        FeatureSplitBench {
            n: self.generator_n,
            ..FeatureSplitBench::default()
        }
    }

    pub fn subgroup(&self) -> SubgroupFailure {
        SubgroupFailure {
            n: self.generator_n,
            ..SubgroupFailure::default()
        }
    }
}

/// Parses `key = value` text into overrides, in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Builds a validated config from an optional file and flag overrides.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<AppConfig, ConfigError> {
    let mut cfg = AppConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        for (k, v) in parse_pairs(&text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let src = file("f0,error\n1,0.5\n");
        let cfg = file(&format!("source = {}\n", src.path().display()));
        let c = parse_config(Some(cfg.path()), &[]).unwrap();
        assert_eq!(c.alpha_source, 0.05);
        assert_eq!(c.alpha_prod, 0.05);
        assert_eq!(c.fdp_max, 0.2);
        assert_eq!(c.k, 10);
        assert_eq!(c.source.as_deref(), Some(src.path()));
    }

    #[test]
    fn out_of_range_alpha_names_key() {
        let cfg = file("alpha_prod = 1.5\n");
        let err = parse_config(Some(cfg.path()), &[]).unwrap_err();
        assert_eq!(err.key(), Some("alpha_prod"));
    }

    #[test]
    fn flags_override_file() {
        let cfg = file("# comment\neps_tol = 0\n\n");
        let c = parse_config(Some(cfg.path()), &[("eps_tol".into(), "0.05".into())]).unwrap();
        assert_eq!(c.eps_tol, 0.05);
    }

    #[test]
    fn unknown_key_and_missing_file() {
        let cfg = file("colour = blue\n");
        let err = parse_config(Some(cfg.path()), &[]).unwrap_err();
        assert_eq!(err.key(), Some("colour"));
        let err = parse_config(None, &[("source".into(), "/no/such/file.csv".into())]).unwrap_err();
        assert_eq!(err.key(), Some("source"));
        assert!(matches!(err, ConfigError::MissingFile { .. }));
    }

    #[test]
    fn syntax_errors_report_line() {
        let cfg = file("k = 3\nnot a pair\n");
        assert_eq!(
            parse_config(Some(cfg.path()), &[]).unwrap_err(),
            ConfigError::Syntax { line: 2 }
        );
    }

    #[test]
    fn lists_and_kinds_parse() {
        let c = parse_config(
            None,
            &[
                ("eps_harm_grid".into(), "0, 0.1,0.2".into()),
                ("feature_kinds".into(), "c,categorical".into()),
                ("schedule".into(), "sigmoid".into()),
                ("horizon".into(), "100".into()),
            ],
        )
        .unwrap();
        assert_eq!(c.eps_harm_grid, vec![0.0, 0.1, 0.2]);
        assert_eq!(
            c.feature_kinds,
            Some(vec![FeatureKind::Continuous, FeatureKind::Categorical])
        );
        assert_eq!(c.schedule_spec().kind, ScheduleKind::Sigmoid { t0: 50 });
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let mut c = AppConfig::default();
        for key in KEYS {
            let err = c.set(key, "?");
            assert!(!matches!(err, Err(ConfigError::UnknownKey { .. })), "{key}");
        }
    }
}
