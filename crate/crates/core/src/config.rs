//! Flat `section.key = value` configuration.
//!
//! ```text
//! # plant.cfg
//! synth.turbines = 6
//! clean.eps = 0.05
//! train.lr = 1e-4
//! ```
//!
//! Blank lines and `#` comments are ignored. Later assignments win, so a
//! file can be layered with environment and command-line overrides. Keys are
//! stored sorted, which makes [`KvConfig::to_string`] a stable snapshot.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Environment overrides look like `WINDTIMER__TRAIN__LR=1e-3` → `train.lr`.
pub const ENV_PREFIX: &str = "WINDTIMER__";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", n + 1)))?;
            let key = k.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key `{key}`", n + 1)));
            }
            cfg.entries.insert(key.to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    /// Apply `key=value` assignments (e.g. from repeated `--set` flags).
    pub fn apply_assignments<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not `key=value`")))?;
            self.entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    /// Apply `WINDTIMER__SECTION__KEY` variables from an iterator of pairs.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                if !key.is_empty() {
                    self.entries.insert(key, value);
                }
            }
        }
    }

    /// Entries of `other` override entries of `self`.
    pub fn merge(&mut self, other: &KvConfig) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn set_default(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::Config(format!("`{key}` = `{v}`: {e}"))),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get_parsed(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get_parsed(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get_parsed(key)
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get_parsed(key)
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        Ok(self.get_u64(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        Ok(self.get_bool(key)?.unwrap_or(default))
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated list, e.g. `eval.horizons = 1,6,12`.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("`{key}` item `{s}`: {e}"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Sub-config of keys under `prefix.` with the prefix removed.
    pub fn section(&self, prefix: &str) -> KvConfig {
        let p = format!("{prefix}.");
        KvConfig {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }
}

impl fmt::Display for KvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_comments_and_overrides() {
        let mut c = KvConfig::parse("# header\nclean.eps = 0.05 # trailing\n\ntrain.lr=1e-4\nclean.eps = 0.1\n").unwrap();
        assert_eq!(c.get_f64("clean.eps").unwrap(), Some(0.1));
        assert_eq!(c.get_f64("train.lr").unwrap(), Some(1e-4));
        c.apply_env([("WINDTIMER__TRAIN__LR".to_string(), "0.5".to_string()), ("HOME".into(), "/".into())]);
        assert_eq!(c.get("train.lr"), Some("0.5"));
        c.apply_assignments(["train.lr=0.25"]).unwrap();
        assert_eq!(c.get("train.lr"), Some("0.25"));
        assert!(!c.contains("home"));
    }

    #[test]
    fn snapshot_is_sorted_and_reparses() {
        let mut c = KvConfig::new();
        c.set("z.b", 2);
        c.set("a.a", "x");
        let s = c.to_string();
        assert_eq!(s, "a.a = x\nz.b = 2\n");
        assert_eq!(KvConfig::parse(&s).unwrap(), c);
    }

    #[test]
    fn typed_errors_name_the_key() {
        let c = KvConfig::parse("train.epochs = many").unwrap();
        let err = c.get_usize("train.epochs").unwrap_err().to_string();
        assert!(err.contains("train.epochs"));
        assert!(KvConfig::parse("novalue").is_err());
    }

    #[test]
    fn lists_and_sections() {
        let c = KvConfig::parse("eval.horizons = 1, 6,12\neval.x = 3").unwrap();
        assert_eq!(c.get_list::<usize>("eval.horizons").unwrap(), Some(vec![1, 6, 12]));
        assert_eq!(c.section("eval").get("x"), Some("3"));
    }
}
