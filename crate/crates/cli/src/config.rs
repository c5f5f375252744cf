//! Optional TOML file supplying defaults for command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

pub const CONFIG_ENV: &str = "DIVRANK_CONFIG";
pub const DEFAULT_CONFIG: &str = "divrank.toml";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Config {
    pub measure: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub cutoff: Option<usize>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub topics: Option<usize>,
    pub top_t: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
}

/// An explicit `--config` must exist. Otherwise the default location (or
/// the one named by the environment variable) is read if present.
pub fn load(explicit: Option<&Path>) -> Result<Config> {
    let (path, required) = match explicit {
        Some(p) => (p.to_path_buf(), true),
        None => match std::env::var_os(CONFIG_ENV) {
            Some(p) => (PathBuf::from(p), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        },
    };
    if !required && !path.exists() {
        return Ok(Config::default());
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys_only() {
        let c: Config = toml::from_str("c = 10.0\nmeasure = \"nrbp\"\nlambda-grid = [0.0, 0.5]\n").unwrap();
        assert_eq!(c.c, Some(10.0));
        assert_eq!(c.lambda_grid, Some(vec![0.0, 0.5]));
        assert!(toml::from_str::<Config>("bogus = 1\n").is_err());
    }
}
