//! Line-oriented `key = value` files.
//!
//! Blank lines and lines starting with `#` are skipped. Keys are unique;
//! surrounding whitespace is trimmed from both sides.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::BenchError;

#[derive(Debug, Clone)]
pub struct Entry {
    pub line: usize,
    pub value: String,
}

/// Parsed file with consumption tracking, so unknown keys can be reported.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, Entry>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| BenchError::spec(line, format!("expected 'key = value', got '{trimmed}'")))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(BenchError::spec(line, "empty key"));
            }
            let entry = Entry { line, value: value.trim().to_string() };
            if entries.insert(key.clone(), entry).is_some() {
                return Err(BenchError::spec(line, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { entries })
    }

    pub fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, BenchError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|err| BenchError::spec(e.line, format!("bad value for '{key}': {err}"))),
        }
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, BenchError>
    where
        T::Err: std::fmt::Display,
    {
        self.take_parsed(key)?.ok_or_else(|| BenchError::spec(0, format!("missing required key '{key}'")))
    }

    /// Counts written as integers or in float notation (`1e8`).
    pub fn take_count(&mut self, key: &str) -> Result<Option<u64>, BenchError> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => {
                parse_count(&e.value).map(Some).map_err(|msg| BenchError::spec(e.line, format!("'{key}': {msg}")))
            }
        }
    }

    /// Errors on the first key nobody consumed.
    pub fn finish(self) -> Result<(), BenchError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, e)) => Err(BenchError::spec(e.line, format!("unknown key '{key}'"))),
        }
    }
}

pub fn parse_count(text: &str) -> Result<u64, String> {
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = text.parse().map_err(|_| format!("'{text}' is not a count"))?;
    if !(v >= 0.0) || v.fract() != 0.0 {
        return Err(format!("'{text}' is not a non-negative integer"));
    }
    // saturate beyond u64 range
    Ok(if v >= u64::MAX as f64 { u64::MAX } else { v as u64 })
}
