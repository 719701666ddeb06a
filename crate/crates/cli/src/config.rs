//! `key = value` run configuration files.
//!
//! One entry per line, `#` starts a comment. Keys use the long flag names with
//! `-` or `_` interchangeably. Command-line flags take precedence over the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("line {}: expected `key = value`, got `{raw}`", lineno + 1)
            })?;
            let key = normalize(key);
            if key.is_empty() {
                bail!("line {}: empty key", lineno + 1);
            }
            if entries
                .insert(key.clone(), value.trim().to_string())
                .is_some()
            {
                bail!("line {}: duplicate key `{key}`", lineno + 1);
            }
        }
        Ok(ConfigFile { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .map(String::as_str)
            .filter(|k| !allowed.iter().any(|a| normalize(a) == *k))
            .collect();
        if !unknown.is_empty() {
            bail!("unknown config key(s): {}", unknown.join(", "));
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(&normalize(key)).map(String::as_str)
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config key `{key}`: {e}"))
            })
            .transpose()
    }

    /// `flag`, else the file's value, else `default`.
    pub fn pick<T>(&self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }

    pub fn pick_list<T>(&self, key: &str, flag: Option<Vec<T>>, default: Vec<T>) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            Some(raw) => parse_list(raw).map_err(|e| anyhow!("config key `{key}`: {e}")),
            None => Ok(default),
        }
    }
}

/// Comma-separated list.
pub fn parse_list<T>(raw: &str) -> std::result::Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

/// A count written as an integer or in scientific notation (`1e6`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Count(pub usize);

impl FromStr for Count {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Ok(v) = s.parse::<usize>() {
            return Ok(Count(v));
        }
        let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
        if f >= 0.0 && f.fract() == 0.0 && f <= usize::MAX as f64 {
            Ok(Count(f as usize))
        } else {
            Err(format!("`{s}` is not a nonnegative integer"))
        }
    }
}

impl Display for Count {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let cfg = ConfigFile::parse("# run\nseed = 7\nbatch-size=32 # inline\n\n").unwrap();
        assert_eq!(cfg.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.get::<usize>("batch_size").unwrap(), Some(32));
        assert_eq!(cfg.pick("seed", Some(3u64), 0).unwrap(), 3);
        assert_eq!(cfg.pick("steps", None, 10usize).unwrap(), 10);
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(ConfigFile::parse("seed 7").is_err());
        assert!(ConfigFile::parse("seed = 1\nseed = 2").is_err());
        let cfg = ConfigFile::parse("seed = x").unwrap();
        assert!(cfg.get::<u64>("seed").is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let cfg = ConfigFile::parse("seed = 1\nbogus = 2").unwrap();
        assert!(cfg.check_keys(&["seed"]).is_err());
        assert!(cfg.check_keys(&["seed", "bogus"]).is_ok());
    }

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!("1e6".parse::<Count>().unwrap(), Count(1_000_000));
        assert_eq!("250".parse::<Count>().unwrap(), Count(250));
        assert!("1.5".parse::<Count>().is_err());
        assert_eq!(
            parse_list::<Count>("1e5, 1e6").unwrap(),
            vec![Count(100_000), Count(1_000_000)]
        );
    }
}
