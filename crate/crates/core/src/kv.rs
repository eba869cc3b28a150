//! Flat `key=value` text used by dataset specs and run configs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed `key=value` lines. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got '{line}'", i + 1)))?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Parse `key` if present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.get_str(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::Config(format!("key '{key}': {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    /// Reject keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Render pairs as `key=value` lines, in the given order.
pub fn render(pairs: &[(&str, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_types() {
        let kv = KeyValues::parse("# header\nseq_len = 4\nlr=0.01 # inline\n\nmode=naive\n").unwrap();
        assert_eq!(kv.require::<usize>("seq_len").unwrap(), 4);
        assert_eq!(kv.get_or("lr", 1.0).unwrap(), 0.01);
        assert_eq!(kv.get_or("missing", 7usize).unwrap(), 7);
        assert_eq!(kv.get_str("mode"), Some("naive"));
        assert!(kv.require::<usize>("mode").is_err());
        assert!(kv.check_known(&["seq_len", "lr"]).is_err());
        assert!(kv.check_known(&["seq_len", "lr", "mode"]).is_ok());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(KeyValues::parse("a=1\nnovalue\n"), Err(Error::Config(m)) if m.contains("line 2")));
        assert!(KeyValues::parse("a=1\na=2\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let text = render(&[("a", "1".into()), ("b", "x".into())]);
        let kv = KeyValues::parse(&text).unwrap();
        assert_eq!(kv.get_str("b"), Some("x"));
    }
}
