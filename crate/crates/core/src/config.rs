//! Minimal key-value config reader.
//!
//! Both the market spec and the pipeline config use the same plain-text
//! format: one `key = value` pair per line, `#` comments, blank lines
//! ignored. Keys may repeat (`group = ...` appears once per group); values
//! keep their raw text and are parsed by the consumer.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    pub entries: Vec<KvEntry>,
}

impl KvFile {
    pub fn parse_str(text: &str) -> Result<KvFile> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {line}: expected 'key = value', got '{trimmed}'"))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line}: empty key")));
            }
            entries.push(KvEntry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(KvFile { entries })
    }

    pub fn load(path: &Path) -> Result<KvFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    /// Last occurrence wins for scalar keys.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|e| e.key == key)
            .map(|e| e.value.as_str())
    }

    /// All occurrences, in file order. Used for repeatable keys.
    pub fn get_all(&self, key: &str) -> Vec<&KvEntry> {
        self.entries.iter().filter(|e| e.key == key).collect()
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "key '{key}': cannot parse '{raw}' as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn parsed_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Keys that the consumer never asked about are usually typos; callers
    /// pass the set they understand and get a hard error for the rest.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for e in &self.entries {
            if !known.contains(&e.key.as_str()) {
                return Err(Error::Config(format!(
                    "line {}: unknown key '{}'",
                    e.line, e.key
                )));
            }
        }
        Ok(())
    }
}
