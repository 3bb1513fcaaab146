//! TOML run configuration with environment overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::Norm;
use crate::detect::{ChangePointConfig, SpeedConstraintConfig};
use crate::ingest::GeoRuleSet;
use crate::model::{Level, Metric, SourceId};
use crate::repair::RepairConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where one source's files come from: a single endpoint for every metric,
/// or one per metric (wide-format sources publish a file per metric).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub id: SourceId,
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub endpoints: BTreeMap<Metric, String>,
}

fn yes() -> bool {
    true
}

impl SourceConfig {
    pub fn endpoint_for(&self, metric: Metric) -> Option<&str> {
        self.endpoints.get(&metric).or(self.endpoint.as_ref()).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSettings {
    pub speed: SpeedConstraintConfig,
    pub change_point: ChangePointConfig,
    /// Change-point search is the slowest stage; it can be switched off.
    pub change_points: bool,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            speed: SpeedConstraintConfig::default(),
            change_point: ChangePointConfig::default(),
            change_points: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepairSettings {
    #[serde(flatten)]
    pub config: RepairConfig,
    /// Round repaired cells with largest-remainder apportionment.
    pub integerize: bool,
}

impl Default for RepairSettings {
    fn default() -> Self {
        RepairSettings {
            config: RepairConfig::default(),
            integerize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub offline: bool,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default = "default_level")]
    pub level: Level,
    /// TOML file holding a [`GeoRuleSet`]; the built-in rules when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_rules: Option<PathBuf>,
    #[serde(default = "default_norm")]
    pub norm: Norm,
    #[serde(default = "default_top")]
    pub top_n: usize,
    /// Summary threshold on d when counting strongly disagreeing keys.
    #[serde(default = "default_threshold")]
    pub compare_threshold: f64,
    #[serde(default = "default_alpha")]
    pub seasonality_alpha: f64,
    /// Inclusive date window for compare, seasonality and change points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis_end: Option<NaiveDate>,
    #[serde(default)]
    pub detect: DetectSettings,
    #[serde(default)]
    pub repair: RepairSettings,
    pub output_dir: PathBuf,
    pub decision_log: PathBuf,
    #[serde(default = "default_cache")]
    pub cache_dir: PathBuf,
}

fn default_metrics() -> Vec<Metric> {
    vec![Metric::Infection, Metric::Death]
}
fn default_level() -> Level {
    Level::County
}
fn default_norm() -> Norm {
    Norm::L2
}
fn default_top() -> usize {
    10
}
fn default_threshold() -> f64 {
    0.05
}
fn default_alpha() -> f64 {
    0.05
}
fn default_cache() -> PathBuf {
    PathBuf::from(".countcurate-cache")
}

/// Environment variables consulted by [`PipelineConfig::apply_env`].
pub const ENV_OFFLINE: &str = "COUNTCURATE_OFFLINE";
pub const ENV_CACHE_DIR: &str = "COUNTCURATE_CACHE_DIR";
/// Followed by `<SOURCE>` or `<SOURCE>_<METRIC>`, upper-cased, e.g.
/// `COUNTCURATE_ENDPOINT_JHU_DEATH`.
pub const ENV_ENDPOINT_PREFIX: &str = "COUNTCURATE_ENDPOINT_";

impl PipelineConfig {
    /// A minimal configuration; mostly useful in tests and bindings.
    pub fn new(sources: Vec<SourceConfig>, output_dir: PathBuf, decision_log: PathBuf) -> Self {
        PipelineConfig {
            sources,
            offline: false,
            metrics: default_metrics(),
            level: default_level(),
            geo_rules: None,
            norm: default_norm(),
            top_n: default_top(),
            compare_threshold: default_threshold(),
            seasonality_alpha: default_alpha(),
            analysis_start: None,
            analysis_end: None,
            detect: DetectSettings::default(),
            repair: RepairSettings::default(),
            output_dir,
            decision_log,
            cache_dir: default_cache(),
        }
    }

    /// Parses TOML text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Loads a config file, applies process environment overrides and
    /// validates the result.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`PipelineConfig::load`] without validation, for callers that
    /// apply further overrides first.
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base)?;
        cfg.apply_env(std::env::vars());
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.decision_log);
        fix(&mut self.cache_dir);
        if let Some(g) = self.geo_rules.as_mut() {
            fix(g);
        }
        for s in &mut self.sources {
            let fix_ep = |e: &mut String| {
                if !crate::ingest::fetch::is_url(e) && Path::new(e.as_str()).is_relative() {
                    *e = base.join(&*e).to_string_lossy().into_owned();
                }
            };
            if let Some(e) = s.endpoint.as_mut() {
                fix_ep(e);
            }
            s.endpoints.values_mut().for_each(fix_ep);
        }
    }

    /// Applies `COUNTCURATE_*` overrides from the given variables.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) {
        for (k, v) in vars {
            if k == ENV_OFFLINE {
                self.offline = matches!(v.as_str(), "1" | "true" | "yes");
            } else if k == ENV_CACHE_DIR {
                self.cache_dir = PathBuf::from(v);
            } else if let Some(rest) = k.strip_prefix(ENV_ENDPOINT_PREFIX) {
                let (src, metric) = match rest.split_once('_') {
                    Some((s, m)) => (s, Some(m)),
                    None => (rest, None),
                };
                let Some(source) = SourceId::ALL.into_iter().find(|s| s.as_str().eq_ignore_ascii_case(src))
                else {
                    continue;
                };
                let metric = match metric.map(|m| m.to_ascii_lowercase().parse::<Metric>()) {
                    Some(Ok(m)) => Some(m),
                    Some(Err(_)) => continue,
                    None => None,
                };
                let entry = match self.sources.iter_mut().find(|s| s.id == source) {
                    Some(e) => e,
                    None => {
                        self.sources.push(SourceConfig {
                            id: source,
                            enabled: true,
                            endpoint: None,
                            endpoints: BTreeMap::new(),
                        });
                        self.sources.last_mut().expect("just pushed")
                    }
                };
                match metric {
                    Some(m) => {
                        entry.endpoints.insert(m, v);
                    }
                    None => entry.endpoint = Some(v),
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let enabled: Vec<&SourceConfig> = self.sources.iter().filter(|s| s.enabled).collect();
        if enabled.is_empty() {
            return Err(ConfigError::Invalid("no source enabled".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.sources {
            if !seen.insert(s.id) {
                return Err(ConfigError::Invalid(format!("source {} listed twice", s.id)));
            }
        }
        for s in &enabled {
            for &m in &self.metrics {
                if s.id.supports_metric(m) && s.id.supports_level(self.level) && s.endpoint_for(m).is_none() {
                    return Err(ConfigError::Invalid(format!("source {} has no endpoint for {m}", s.id)));
                }
            }
        }
        if self.metrics.is_empty() {
            return Err(ConfigError::Invalid("no metric selected".into()));
        }
        if let (Some(a), Some(b)) = (self.analysis_start, self.analysis_end) {
            if a > b {
                return Err(ConfigError::Invalid("analysis_start is after analysis_end".into()));
            }
        }
        if !(self.seasonality_alpha > 0.0 && self.seasonality_alpha < 1.0) {
            return Err(ConfigError::Invalid("seasonality_alpha must lie in (0, 1)".into()));
        }
        self.detect
            .speed
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let cp = &self.detect.change_point;
        if !(cp.alpha > 0.0 && cp.alpha < 1.0) {
            return Err(ConfigError::Invalid("change_point.alpha must lie in (0, 1)".into()));
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            return Err(ConfigError::Invalid(format!(
                "output_dir {} is not a directory",
                self.output_dir.display()
            )));
        }
        std::fs::create_dir_all(&self.output_dir).map_err(|e| {
            ConfigError::Invalid(format!("output_dir {} is not writable: {e}", self.output_dir.display()))
        })?;
        if let Some(g) = &self.geo_rules {
            self.load_geo_rules()?;
            if !g.exists() {
                return Err(ConfigError::Invalid(format!("geo rules {} not found", g.display())));
            }
        }
        Ok(())
    }

    pub fn load_geo_rules(&self) -> Result<GeoRuleSet, ConfigError> {
        let Some(path) = &self.geo_rules else {
            return Ok(GeoRuleSet::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.clone(),
            source,
        })?;
        let rules: GeoRuleSet = toml::from_str(&text)?;
        rules.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(rules)
    }

    /// The settings that determine outputs, with output and bookkeeping
    /// locations blanked so the same analysis hashes identically wherever
    /// it is written.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.decision_log = PathBuf::new();
        c.cache_dir = PathBuf::new();
        serde_json::to_string(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"
output_dir = "out"
decision_log = "decisions.jsonl"

[[sources]]
id = "NYT"
endpoint = "nyt.csv"

[[sources]]
id = "JHU"
endpoints = { infection = "jhu_cases.csv", death = "https://example.org/jhu_deaths.csv" }
"#;

    #[test]
    fn parses_with_defaults_and_resolves_paths() {
        let cfg = PipelineConfig::from_toml(MIN, Path::new("/base")).unwrap();
        assert_eq!(cfg.level, Level::County);
        assert_eq!(cfg.metrics, vec![Metric::Infection, Metric::Death]);
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));
        assert_eq!(cfg.sources[0].endpoint_for(Metric::Death), Some("/base/nyt.csv"));
        assert_eq!(
            cfg.sources[1].endpoint_for(Metric::Death),
            Some("https://example.org/jhu_deaths.csv")
        );
        assert_eq!(cfg.detect.speed.window_w, 14);
        assert_eq!(cfg.repair.config.lookback, 28);
    }

    #[test]
    fn env_overrides() {
        let mut cfg = PipelineConfig::from_toml(MIN, Path::new("/base")).unwrap();
        cfg.apply_env([
            ("COUNTCURATE_ENDPOINT_JHU_INFECTION".to_string(), "/x/j.csv".to_string()),
            ("COUNTCURATE_ENDPOINT_USAFACTS".to_string(), "/x/u.csv".to_string()),
            ("COUNTCURATE_CACHE_DIR".to_string(), "/tmp/c".to_string()),
            ("COUNTCURATE_OFFLINE".to_string(), "1".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ]);
        assert!(cfg.offline);
        assert_eq!(cfg.cache_dir, PathBuf::from("/tmp/c"));
        assert_eq!(cfg.sources[1].endpoint_for(Metric::Infection), Some("/x/j.csv"));
        assert_eq!(cfg.sources[2].id, SourceId::USAFacts);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = PipelineConfig::from_toml(&format!("{MIN}\nbogus = 1\n"), Path::new("/")).unwrap_err();
        assert!(e.to_string().contains("bogus"));
    }

    #[test]
    fn validation_requires_an_enabled_source() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::from_toml(MIN, dir.path()).unwrap();
        cfg.validate().unwrap();
        for s in &mut cfg.sources {
            s.enabled = false;
        }
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_ignores_locations() {
        let a = PipelineConfig::from_toml(MIN, Path::new("/a")).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
