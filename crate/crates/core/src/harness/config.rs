//! Flat `key = value` experiment configuration.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Keys beginning with this prefix list comma-separated values to sweep.
pub const SWEEP_PREFIX: &str = "sweep.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    /// 1-based source line; 0 for entries set programmatically.
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parsed but untyped configuration, in source order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: Vec<ConfigEntry>,
}

fn config_error(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RawConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_error(line, content, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(config_error(line, key, "keys must be non-empty and contain no spaces"));
            }
            if let Some(prev) = cfg.get(key) {
                return Err(config_error(
                    line,
                    key,
                    format!("duplicate key (first set on line {})", prev.line),
                ));
            }
            cfg.entries.push(ConfigEntry {
                line,
                key: key.to_string(),
                value: value.to_string(),
            });
        }
        Ok(cfg)
    }

    pub fn entries(&self) -> &[ConfigEntry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&ConfigEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    /// Replaces the value in place or appends a new entry.
    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value,
            None => self.entries.push(ConfigEntry {
                line: 0,
                key: key.to_string(),
                value,
            }),
        }
    }

    /// Entries of `other` replace or extend this configuration, keeping
    /// their own line numbers.
    pub fn merge(&mut self, other: &RawConfig) {
        for e in &other.entries {
            match self.entries.iter_mut().find(|x| x.key == e.key) {
                Some(x) => *x = e.clone(),
                None => self.entries.push(e.clone()),
            }
        }
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.retain(|e| e.key != key);
    }

    /// `(key, values)` for every `sweep.key = v1, v2, …` entry.
    pub fn sweep_axes(&self) -> Result<Vec<(String, Vec<String>)>> {
        self.entries
            .iter()
            .filter_map(|e| e.key.strip_prefix(SWEEP_PREFIX).map(|k| (e, k)))
            .map(|(e, k)| {
                let values: Vec<String> = e.value.split(',').map(|v| v.trim().to_string()).collect();
                if values.iter().any(String::is_empty) {
                    return Err(config_error(
                        e.line,
                        &e.key,
                        "sweep values must be a non-empty comma-separated list",
                    ));
                }
                Ok((k.to_string(), values))
            })
            .collect()
    }

    pub fn without_sweep(&self) -> RawConfig {
        RawConfig {
            entries: self
                .entries
                .iter()
                .filter(|e| !e.key.starts_with(SWEEP_PREFIX))
                .cloned()
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{} = {}\n", e.key, e.value))
            .collect()
    }

    /// Typed lookup with a default; parse failures name the line and key.
    pub fn field<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(e) => e
                .value
                .parse()
                .map_err(|err| config_error(e.line, key, format!("cannot parse `{}`: {err}", e.value))),
        }
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.get(key).map_or(0, |e| e.line)
    }

    pub fn error(&self, key: &str, message: impl Into<String>) -> Error {
        config_error(self.line_of(key), key, message)
    }
}
