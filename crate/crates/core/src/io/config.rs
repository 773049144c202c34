//! Flat `key = value` run configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys use the long
//! command-line flag names (`iterations`, `r-fixed`, ...); underscores are
//! accepted in place of dashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValueConfig {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

fn normalise_key(k: &str) -> String {
    k.trim().replace('_', "-").to_ascii_lowercase()
}

impl KeyValueConfig {
    pub fn parse(path: impl Into<PathBuf>, text: &str) -> Result<Self> {
        let path = path.into();
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| {
                Error::parse(
                    &path,
                    line,
                    format!("expected `key = value`, found `{body}`"),
                )
            })?;
            let key = normalise_key(key);
            if key.is_empty() {
                return Err(Error::parse(&path, line, "empty key"));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (value.trim().to_string(), line))
            {
                return Err(Error::parse(
                    &path,
                    line,
                    format!("key `{key}` repeated (first on line {first})"),
                ));
            }
        }
        Ok(Self { path, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(path, &text)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::parse(
                    &self.path,
                    *line,
                    format!("unknown key `{key}`"),
                ));
            }
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries
            .get(&normalise_key(key))
            .map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(&normalise_key(key)) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                Error::parse(
                    &self.path,
                    *line,
                    format!("invalid value `{v}` for `{key}`"),
                )
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_pairs() {
        let c = KeyValueConfig::parse(
            "run.cfg",
            "# comment\niterations = 200\n\nr_fixed=1000\nvariant = nb\n",
        )
        .unwrap();
        assert_eq!(c.get::<usize>("iterations").unwrap(), Some(200));
        assert_eq!(c.get::<f64>("r-fixed").unwrap(), Some(1000.0));
        assert_eq!(c.get_str("variant"), Some("nb"));
        assert_eq!(c.get::<usize>("thin").unwrap(), None);
        c.check_keys(&["iterations", "r-fixed", "variant"]).unwrap();
        assert!(c.check_keys(&["iterations"]).is_err());
    }

    #[test]
    fn reports_bad_lines() {
        let err = KeyValueConfig::parse("x.cfg", "a = 1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = KeyValueConfig::parse("x.cfg", "a = 1\na = 2\n").unwrap_err();
        assert!(err.to_string().contains("first on line 1"));
        let c = KeyValueConfig::parse("x.cfg", "k = six\n").unwrap();
        assert!(c.get::<usize>("k").is_err());
    }
}
