//! Flat `key = value` text documents used for configs, manifests headers,
//! registries and checkpoint metadata.
//!
//! Keys carry a section prefix (`train.learning_rate`). Lines starting with
//! `#` and blank lines are ignored. Rendering is canonical: entries are
//! written in insertion order, one per line, and floats use Rust's
//! shortest round-trip representation so a parse of a render is exact.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KvDoc {
    entries: Vec<(String, String)>,
}

impl KvDoc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::new();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key `{k}`",
                    lineno + 1
                )));
            }
            doc.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_list<V: Display>(&mut self, key: &str, values: &[V]) {
        let joined = values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        self.set(key, joined);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overlays `other` onto `self`; keys in `other` win.
    pub fn merge(&mut self, other: &KvDoc) {
        for (k, v) in &other.entries {
            self.set(k, v);
        }
    }

    /// Entries whose key starts with `prefix.` (prefix kept).
    pub fn section(&self, prefix: &str) -> KvDoc {
        let lead = format!("{prefix}.");
        KvDoc {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.starts_with(&lead))
                .cloned()
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// Starts a typed read that tracks which keys were consumed.
    pub fn reader(&self) -> KvReader<'_> {
        KvReader {
            doc: self,
            used: BTreeSet::new(),
        }
    }
}

pub struct KvReader<'a> {
    doc: &'a KvDoc,
    used: BTreeSet<String>,
}

impl KvReader<'_> {
    /// Typed value for `key`, or `default` when absent.
    pub fn value<V: FromStr>(&mut self, key: &str, default: V) -> Result<V> {
        self.used.insert(key.to_string());
        match self.doc.get(key) {
            None => Ok(default),
            Some(raw) => parse_value(key, raw),
        }
    }

    pub fn required<V: FromStr>(&mut self, key: &str) -> Result<V> {
        self.used.insert(key.to_string());
        let raw = self
            .doc
            .get(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))?;
        parse_value(key, raw)
    }

    pub fn list<V: FromStr>(&mut self, key: &str, default: Vec<V>) -> Result<Vec<V>> {
        self.used.insert(key.to_string());
        match self.doc.get(key) {
            None => Ok(default),
            Some("") => Ok(Vec::new()),
            Some(raw) => raw.split(',').map(|p| parse_value(key, p.trim())).collect(),
        }
    }

    /// Marks a key as known without reading it.
    pub fn allow(&mut self, key: &str) {
        self.used.insert(key.to_string());
    }

    /// Fails if the document holds keys nobody asked for.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&str> = self
            .doc
            .entries()
            .map(|(k, _)| k)
            .filter(|k| !self.used.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown keys: {}",
                unknown.join(", ")
            )))
        }
    }
}

fn parse_value<V: FromStr>(key: &str, raw: &str) -> Result<V> {
    raw.parse()
        .map_err(|_| Error::Config(format!("cannot parse `{raw}` for key `{key}`")))
}
