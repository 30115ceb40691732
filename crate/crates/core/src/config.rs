//! Flat `key = value` text files.
//!
//! ```text
//! # comment
//! d = 2
//! sigma = 1 0.5 0.5 1
//! ```
//!
//! Keys are unique; values are raw strings until a typed getter parses them.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    source: String,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let loc = format!("{source}:{}", i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(&loc, "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::parse(&loc, format!("bad key `{key}`")));
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(Error::parse(&loc, format!("duplicate key `{key}`")));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: i + 1,
            });
        }
        Ok(Self {
            source: source.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    /// Fails on the first key not in `allowed`, naming it.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(Error::parse(
                self.loc(e),
                format!("unknown key `{}` (allowed: {})", e.key, allowed.join(", ")),
            )),
            None => Ok(()),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.find(key).map(|e| e.value.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        let Some(e) = self.find(key) else {
            return Ok(None);
        };
        e.value
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::parse(self.loc(e), format!("bad value `{}` for `{key}`", e.value)))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::parse(&self.source, format!("missing key `{key}`")))
    }

    /// Whitespace- or comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.find(key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| Error::parse(self.loc(e), format!("bad list item `{t}` for `{key}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn require_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.get_list(key)?
            .ok_or_else(|| Error::parse(&self.source, format!("missing key `{key}`")))
    }

    fn find(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn loc(&self, e: &Entry) -> String {
        format!("{}:{}", self.source, e.line)
    }
}
