//! `key = value` config files with `#` comments.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed entries, consumed key by key; whatever is left is an error.
#[derive(Debug, Clone, Default)]
pub struct KvEntries {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvEntries {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value'", i + 1)))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(KvEntries { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(v) = self.take(key) {
            *slot = parse_value(key, &v)?;
        }
        Ok(())
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((key, (line, _))) => Err(Error::config(format!("line {line}: unknown key '{key}'"))),
            None => Ok(()),
        }
    }
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse '{v}'")))
}

/// Appends `key = value` lines.
#[derive(Debug, Default)]
pub struct KvWriter(String);

impl KvWriter {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        self.0.push_str(&format!("{key} = {value}\n"));
    }

    pub fn finish(self) -> String {
        self.0
    }
}
