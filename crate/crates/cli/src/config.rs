//! Run configuration: model parameters plus run settings, read from one
//! `name = value` file. Keys naming a model parameter go to the
//! [`ParameterSet`]; the rest are run settings that subcommand flags
//! override.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use csd_core::ParameterSet;

/// Run-setting keys a config file may carry.
pub const RUN_KEYS: &[&str] = &[
    "cells",
    "t_end",
    "sample_dt",
    "injection_rate",
    "boundary",
    "initial",
    "tol",
    "pair",
    "threshold",
    "c_bracket",
    "samples",
    "order",
    "error_threshold",
    "sweep",
    "sizes",
    "model",
    "z_points",
    "c",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Parameter lines in file order, before overrides.
    param_lines: Vec<(String, String)>,
    run: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected `name = value`, got `{line}`", i + 1);
            };
            cfg.insert(key.trim(), value.trim()).with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Adds or replaces one key.
    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if ParameterSet::NAMES.contains(&key) {
            self.param_lines.retain(|(k, _)| k != key);
            self.param_lines.push((key.to_string(), value.to_string()));
        } else if RUN_KEYS.contains(&key) {
            self.run.insert(key.to_string(), value.to_string());
        } else {
            bail!("unknown config key `{key}`");
        }
        Ok(())
    }

    /// `key=value` from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').with_context(|| format!("expected key=value, got `{kv}`"))?;
        self.insert(k.trim(), v.trim())
    }

    pub fn params(&self) -> Result<ParameterSet> {
        let text: String = self.param_lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        Ok(ParameterSet::parse(&text)?)
    }

    /// A run setting, if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.run.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| anyhow::anyhow!("config key `{key}` = `{v}`: {e}")),
        }
    }
}

/// Two comma-separated values.
pub fn parse_pair<T: FromStr>(s: &str) -> Result<(T, T), String>
where
    T::Err: std::fmt::Display,
{
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated values, got `{s}`"))?;
    let a = a.trim().parse().map_err(|e| format!("`{a}`: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("`{b}`: {e}"))?;
    Ok((a, b))
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|t| t.trim().parse().map_err(|e| format!("`{t}`: {e}"))).collect()
}

/// Fills `slot` from the config, then from `default`, when no flag set it.
pub fn fill<T>(slot: &mut Option<T>, from_config: Option<T>, default: impl FnOnce() -> T) {
    if slot.is_none() {
        *slot = Some(from_config.unwrap_or_else(default));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_parameters_from_run_keys() {
        let mut cfg = RunConfig::parse("d_k = 2.0e-5\ncells = 80 # comment\n\nc_bracket = 0.05, 0.09\n").unwrap();
        assert_eq!(cfg.get::<usize>("cells").unwrap(), Some(80));
        cfg.apply_override("d_k=3e-5").unwrap();
        assert_eq!(cfg.params().unwrap().d_k, 3e-5);
        let s: String = cfg.get("c_bracket").unwrap().unwrap();
        assert_eq!(parse_pair::<f64>(&s).unwrap(), (0.05, 0.09));
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(cfg.get::<usize>("sweep").unwrap().is_none());
    }
}
