//! Key-value config text blocks shared by all modules and the CLI.
//!
//! Format: `key = value` lines, `#` comments, optional `[section]` headers.
//! Keys before the first header live in the root section. Values are plain
//! strings; typed accessors parse on demand and report the key on failure.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct ConfigSection {
    entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default)]
pub struct Config {
    root: ConfigSection,
    sections: BTreeMap<String, ConfigSection>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let mut cfg = Config::default();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::ConfigParse {
                    line: lineno + 1,
                    msg: "unterminated section header".into(),
                })?;
                current = Some(name.trim().to_string());
                cfg.sections.entry(name.trim().to_string()).or_default();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::ConfigParse {
                line: lineno + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::ConfigParse {
                    line: lineno + 1,
                    msg: "empty key".into(),
                });
            }
            let section = match &current {
                Some(name) => cfg.sections.get_mut(name).unwrap(),
                None => &mut cfg.root,
            };
            section.entries.insert(key, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn root(&self) -> &ConfigSection {
        &self.root
    }

    pub fn section(&self, name: &str) -> Option<&ConfigSection> {
        self.sections.get(name)
    }

    pub fn require_section(&self, name: &str) -> Result<&ConfigSection> {
        self.section(name)
            .ok_or_else(|| Error::InvalidArgument(format!("missing [{name}] section")))
    }

    pub fn sections(&self) -> impl Iterator<Item = (&String, &ConfigSection)> {
        self.sections.iter()
    }

    /// Re-emit the resolved config deterministically (sorted keys).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.root.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (name, sec) in &self.sections {
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in &sec.entries {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}

impl ConfigSection {
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        Self {
            entries: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("missing key '{key}'")))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.require_str(key)?
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("key '{key}' is not a number")))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.require_str(key)?
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("key '{key}' is not an integer")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.require_f64(key),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(_) => self.require_usize(key),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Comma-separated list of numbers.
    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.require_str(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("key '{key}': bad number '{s}'")))
            })
            .collect()
    }

    pub fn require_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.require_str(key)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("key '{key}': bad integer '{s}'")))
            })
            .collect()
    }
}
