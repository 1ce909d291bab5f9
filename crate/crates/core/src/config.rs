//! Run configuration: a TOML file whose values command-line flags override.
//!
//! The file has optional top-level `seed` and `jobs`, and one table per
//! subcommand (`[eval]`, `[build_dataset]`, `[synth]`, `[transfer]`,
//! `[replay]`, `[mix]`) using the same keys as the flags, with dashes
//! written as underscores. Relative paths are taken relative to the
//! working directory.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayConfig, GatewayError, HttpGateway, LmGateway, SimulatedGateway, SimulationConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("missing required setting `{0}` (give the flag or set it in the config file)")]
    Missing(&'static str),
    #[error("input file {0} does not exist")]
    NoSuchFile(String),
}

/// The parsed config file, kept alongside its original text.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    pub text: String,
    pub table: toml::Table,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        const KNOWN: &[&str] = &["seed", "jobs", "eval", "build_dataset", "synth", "transfer", "replay", "mix"];
        if let Some(k) = table.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(ConfigError::Invalid(format!("unknown key `{k}`")));
        }
        Ok(ConfigFile { text: text.to_string(), table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn section(&self, name: &str) -> Result<toml::Table, ConfigError> {
        match self.table.get(name) {
            None => Ok(toml::Table::new()),
            Some(toml::Value::Table(t)) => Ok(t.clone()),
            Some(_) => Err(ConfigError::Invalid(format!("`{name}` must be a table"))),
        }
    }

    pub fn top<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.table
            .get(key)
            .map(|v| v.clone().try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(format!("`{key}`: {e}"))))
            .transpose()
    }
}

/// Lay `flags` over `section`; flags win. Returns the merged settings and
/// the merged table.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, mut section: toml::Table) -> Result<(T, toml::Table), ConfigError> {
    let given = toml::Table::try_from(flags).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    overlay(&mut section, given);
    let merged = section.clone().try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
    Ok((merged, section))
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn require<T>(value: Option<T>, name: &'static str) -> Result<T, ConfigError> {
    value.ok_or(ConfigError::Missing(name))
}

pub fn existing(path: &Path) -> Result<&Path, ConfigError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(ConfigError::NoSuchFile(path.display().to_string()))
    }
}

pub fn existing_all(paths: &[PathBuf]) -> Result<(), ConfigError> {
    paths.iter().try_for_each(|p| existing(p).map(|_| ()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GatewayKind {
    /// Deterministic offline simulator.
    Mock,
    /// Remote service from LM_BASE_URL / LM_API_KEY.
    Http,
}

/// Gateway settings shared by the subcommands that talk to a model. In the
/// config file these live in a nested table such as `[synth.gateway]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct GatewayArgs {
    /// Which language-model service to use [default: mock]
    #[arg(long = "gateway", value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<GatewayKind>,
    /// Completion model name for the http gateway
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub completion_model: Option<String>,
    /// Embedding model name for the http gateway
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding_model: Option<String>,
    /// Per-request timeout in seconds for the http gateway [default: 60]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<u64>,
    /// Maximum concurrent http requests [default: 4]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
    /// Mock only: probability that a generated trajectory is malformed [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub malformed_rate: Option<f64>,
    /// Mock only: probability that a generated instruction repeats an example [default: 0]
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub echo_rate: Option<f64>,
}

impl GatewayArgs {
    pub fn build(&self, seed: u64) -> Result<Box<dyn LmGateway>, GatewayError> {
        match self.kind.unwrap_or(GatewayKind::Mock) {
            GatewayKind::Mock => {
                let rate = |r: Option<f64>, name: &str| match r.unwrap_or(0.0) {
                    p if (0.0..=1.0).contains(&p) => Ok(p),
                    p => Err(GatewayError::Config(format!("{name} {p} outside [0, 1]"))),
                };
                Ok(Box::new(SimulatedGateway::new(SimulationConfig {
                    seed,
                    malformed_rate: rate(self.malformed_rate, "malformed_rate")?,
                    echo_rate: rate(self.echo_rate, "echo_rate")?,
                    ..SimulationConfig::default()
                })))
            }
            GatewayKind::Http => {
                let mut cfg = GatewayConfig::from_env()?;
                if let Some(m) = &self.completion_model {
                    cfg.completion_model.clone_from(m);
                }
                if let Some(m) = &self.embedding_model {
                    cfg.embedding_model.clone_from(m);
                }
                if let Some(t) = self.timeout_s {
                    cfg.timeout = std::time::Duration::from_secs(t);
                }
                if let Some(n) = self.max_in_flight {
                    cfg.max_in_flight = n.max(1);
                }
                Ok(Box::new(HttpGateway::new(cfg)))
            }
        }
    }
}
