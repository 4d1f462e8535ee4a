//! Layered configuration: built-in defaults, then the optional TOML config
//! file (`--config` flag or `LABMATE_CONFIG` env var), then command-line
//! flags. Later layers win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use labmate_core::reasoning::BackendConfig;
use labmate_core::rules::RuleConfig;
use labmate_core::sim::{EpisodeConfig, ScenarioSpec};

pub const CONFIG_ENV: &str = "LABMATE_CONFIG";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub rules: Option<RuleConfig>,
    pub backend: Option<BackendConfig>,
    pub sim: Option<ScenarioSpec>,
    pub episode: Option<EpisodeConfig>,
}

/// Fully resolved configuration the commands draw from.
#[derive(Debug, Clone, Default)]
pub struct GlobalConfig {
    pub rules: RuleConfig,
    pub backend: BackendConfig,
    pub sim: ScenarioSpec,
    pub episode: EpisodeConfig,
}

impl GlobalConfig {
    pub fn load(flag_path: Option<&Path>) -> Result<GlobalConfig> {
        let path: Option<PathBuf> = match flag_path {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
        };
        let file = match path {
            None => FileConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(&p)
                    .with_context(|| format!("reading config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config file {}", p.display()))?
            }
        };
        let episode_given = file.episode.is_some();
        let mut cfg = GlobalConfig {
            rules: file.rules.unwrap_or_default(),
            backend: file.backend.unwrap_or_default(),
            sim: file.sim.unwrap_or_default(),
            episode: file.episode.unwrap_or_default(),
        };
        // episode rules follow the top-level rules section unless the file
        // carries its own [episode] table
        if !episode_given {
            cfg.episode.rules = cfg.rules.clone();
        }
        if let Err(e) = cfg.rules.validate() {
            bail!("config: {e}");
        }
        Ok(cfg)
    }
}

/// Parse a `a,b,c` class-mix flag.
pub fn parse_class_mix(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {}", parts.len()));
    }
    let mut mix = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        mix[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("component {} of class mix: {e}", i + 1))?;
    }
    Ok(mix)
}
