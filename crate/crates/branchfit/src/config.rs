//! Plain `key = value` configuration files. Keys use the long flag names;
//! `-` and `_` are interchangeable. Flags given on the command line win.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{AppError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::Input(format!("config line {}: expected key = value", n + 1)))?;
            values.insert(normalize(k), v.trim().to_string());
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(&normalize(key))
            .map(|v| {
                v.parse()
                    .map_err(|_| AppError::Input(format!("config key {key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// The flag if given, else the file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Reject keys that no option of the command understands.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(AppError::Input(format!("unknown config key {k}"))),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let c = ConfigFile::parse("k = 35\n# comment\npop-cap=8000 # trailing\n").unwrap();
        assert_eq!(c.get::<f64>("k").unwrap(), Some(35.0));
        assert_eq!(c.get::<usize>("pop_cap").unwrap(), Some(8000));
        assert_eq!(c.pick(Some(2.0), "k").unwrap(), Some(2.0));
        assert_eq!(c.pick::<f64>(None, "theta").unwrap(), None);
        assert!(c.check_keys(&["k"]).is_err());
        assert!(c.check_keys(&["k", "pop_cap"]).is_ok());
        assert!(ConfigFile::parse("novalue\n").is_err());
    }
}
