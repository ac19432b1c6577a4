//! Gateway configuration: one TOML file, overridable through `CLEARSIGN_*`
//! environment variables.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! descriptor = "navi.json"
//! state = "state.json"
//! snapshot_interval_hours = 24
//! snapshot_retention_days = 90
//! view_capacity = 1024
//!
//! [tokens]
//! "secret-token" = "ana"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clearsign_core::consent::DEFAULT_SNAPSHOT_RETENTION_DAYS;
use clearsign_core::enforcer::DEFAULT_VIEW_CAPACITY;
use clearsign_core::engine::DEFAULT_SNAPSHOT_INTERVAL_HOURS;
use clearsign_core::EngineConfig;
use serde::Deserialize;
use thiserror::Error;

pub const ENV_PREFIX: &str = "CLEARSIGN_";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// System document to serve.
    pub descriptor: PathBuf,
    /// State file; without one the gateway keeps everything in memory.
    #[serde(default)]
    pub state: Option<PathBuf>,
    #[serde(default = "default_interval")]
    pub snapshot_interval_hours: i64,
    #[serde(default = "default_retention")]
    pub snapshot_retention_days: i64,
    /// Materialized views kept retrievable under `/views/{id}`.
    #[serde(default = "default_view_capacity")]
    pub view_capacity: usize,
    /// Bearer token -> user id.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_interval() -> i64 {
    DEFAULT_SNAPSHOT_INTERVAL_HOURS
}

fn default_retention() -> i64 {
    DEFAULT_SNAPSHOT_RETENTION_DAYS
}

fn default_view_capacity() -> usize {
    DEFAULT_VIEW_CAPACITY
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid value for {var}: {reason}")]
    Env { var: String, reason: String },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, applies the process environment, and resolves relative
    /// paths against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(std::env::vars())?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.descriptor = base.join(&cfg.descriptor);
        cfg.state = cfg.state.map(|s| base.join(s));
        cfg.check()?;
        Ok(cfg)
    }

    /// Applies `CLEARSIGN_LISTEN`, `CLEARSIGN_DESCRIPTOR`, `CLEARSIGN_STATE`,
    /// `CLEARSIGN_SNAPSHOT_INTERVAL_HOURS`, `CLEARSIGN_SNAPSHOT_RETENTION_DAYS`,
    /// `CLEARSIGN_VIEW_CAPACITY` and `CLEARSIGN_TOKENS` (`token=user,token=user`).
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(
        &mut self,
        vars: I,
    ) -> Result<(), ConfigError> {
        let int = |var: &str, v: &str| {
            v.parse::<i64>().map_err(|e| ConfigError::Env {
                var: var.to_owned(),
                reason: e.to_string(),
            })
        };
        for (k, v) in vars {
            let Some(name) = k.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            match name {
                "LISTEN" => self.listen = v,
                "DESCRIPTOR" => self.descriptor = v.into(),
                "STATE" => self.state = (!v.is_empty()).then(|| v.into()),
                "SNAPSHOT_INTERVAL_HOURS" => self.snapshot_interval_hours = int(&k, &v)?,
                "SNAPSHOT_RETENTION_DAYS" => self.snapshot_retention_days = int(&k, &v)?,
                "VIEW_CAPACITY" => {
                    self.view_capacity =
                        v.parse()
                            .map_err(|e: std::num::ParseIntError| ConfigError::Env {
                                var: k.clone(),
                                reason: e.to_string(),
                            })?
                }
                "TOKENS" => {
                    let mut tokens = BTreeMap::new();
                    for pair in v.split(',').filter(|p| !p.trim().is_empty()) {
                        let (t, u) = pair.split_once('=').ok_or_else(|| ConfigError::Env {
                            var: k.clone(),
                            reason: format!("expected token=user, got {pair:?}"),
                        })?;
                        tokens.insert(t.trim().to_owned(), u.trim().to_owned());
                    }
                    self.tokens = tokens;
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.snapshot_interval_hours <= 0 {
            return Err(ConfigError::NonPositive("snapshot_interval_hours"));
        }
        if self.snapshot_retention_days <= 0 {
            return Err(ConfigError::NonPositive("snapshot_retention_days"));
        }
        if self.view_capacity == 0 {
            return Err(ConfigError::NonPositive("view_capacity"));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            snapshot_interval: chrono::Duration::hours(self.snapshot_interval_hours),
            snapshot_retention: chrono::Duration::days(self.snapshot_retention_days),
            view_capacity: self.view_capacity,
        }
    }
}
