//! Flat `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment line; blank lines are ignored.
//! Keys are the long flag names without dashes (`epochs = 200`). `gold` may
//! repeat. Command-line flags override file values.

use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ConfigFile {
    entries: Vec<(String, String)>,
}

pub const KEYS: &[&str] = &[
    "source",
    "test-ref",
    "dev-ref",
    "table",
    "embeddings",
    "gold",
    "out",
    "seed",
    "epochs",
    "batch-size",
    "skip-translation",
    "max-vocab",
    "source-lang",
    "target-lang",
    "model",
    "alpha",
    "joint",
    "strict",
    "endpoint",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", i + 1);
            };
            let key = key.trim();
            if !KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", i + 1);
            }
            if key != "gold" && entries.iter().any(|(k, _): &(String, String)| k == key) {
                bail!("line {}: `{key}` set twice", i + 1);
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all(&self, key: &str) -> Vec<&str> {
        self.entries.iter().filter(|(k, _)| k == key).map(|(_, v)| v.as_str()).collect()
    }

    /// Parsed value of `key`, if present.
    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow::anyhow!("config `{key}`: {e}")))
            .transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => bail!("config `{key}`: expected true or false, found `{v}`"),
        }
    }
}
