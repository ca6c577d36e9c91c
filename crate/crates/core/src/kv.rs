//! Flat `key = value` documents used for configs and manifests.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may appear once.
//! Readers `take` the keys they understand and then call [`KvDoc::finish`],
//! which rejects anything left over.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KvDoc {
    source: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KvDoc {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&source, format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(Error::format(&source, format!("line {}: empty key", n + 1)));
            }
            if entries.insert(key.clone(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::format(&source, format!("line {}: duplicate key {key}", n + 1)));
            }
        }
        Ok(KvDoc { source, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Sets `key`, replacing any value from the document.
    pub fn override_value(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                Error::format(&self.source, format!("line {line}: bad value for {key} ({v}): {e}"))
            }),
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.take(key)?
            .ok_or_else(|| Error::format(&self.source, format!("missing key {key}")))
    }

    /// Comma-separated list; an empty value is the empty list.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v)
                .map(Some)
                .map_err(|e| Error::format(&self.source, format!("line {line}: bad list for {key}: {e}"))),
        }
    }

    pub fn require_list<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>>
    where
        T::Err: Display,
    {
        self.take_list(key)?
            .ok_or_else(|| Error::format(&self.source, format!("missing key {key}")))
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((k, (line, _))) = self.entries.iter().next() {
            let rest: Vec<&str> = self.entries.keys().map(String::as_str).collect();
            return Err(Error::Config(format!(
                "{}: unknown key {k} on line {line} (unrecognized: {})",
                self.source.display(),
                rest.join(", ")
            )));
        }
        Ok(())
    }
}

pub fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p}: {e}")))
        .collect()
}

pub fn join_list<T: Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

/// Ordered writer; keys come out in insertion order.
#[derive(Debug, Default, Clone)]
pub struct KvWriter {
    lines: Vec<String>,
}

impl KvWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comment(&mut self, text: &str) -> &mut Self {
        self.lines.push(format!("# {text}"));
        self
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.lines.push(format!("{key} = {value}"));
        self
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
