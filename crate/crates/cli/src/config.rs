//! Flat `key = value` configuration files.
//!
//! Precedence is flag, then file, then built-in default. Blank lines and
//! lines starting with `#` are ignored; later duplicates override earlier
//! ones.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, (usize, String)>,
    source: String,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Input(format!(
                    "{source}:{}: expected key = value, found {line:?}",
                    k + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Input(format!("{source}:{}: unknown key {key:?}", k + 1)));
            }
            entries.insert(key, (k + 1, value.trim().to_string()));
        }
        Ok(ConfigFile {
            entries,
            source: source.to_string(),
        })
    }

    /// `flag` if given, else the parsed file value for `key`, else `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e| {
                CliError::Input(format!("{}:{line}: bad value for {key}: {e}", self.source))
            }),
        }
    }

    /// Like [`pick`](Self::pick) with a default.
    pub fn value<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}

pub const KNOWN_KEYS: &[&str] = &[
    "tol_rel",
    "tol_abs",
    "max_steps",
    "variant",
    "warm_start",
    "threads",
    "deterministic",
    "seed",
    "format",
    "n",
    "m",
    "zero_fraction",
    "turbulence",
    "target_v0",
    "v0_rel",
    "total_s",
    "oracle_tol",
    "oracle_max_iters",
    "oracle_size_limit",
    "jobs",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let f = ConfigFile::parse("# comment\ntol_rel = 1e-6\nthreads=3\n\nmax-steps = 40\n", "cfg").unwrap();
        assert_eq!(f.value(Some(1e-9), "tol_rel", 1e-8).unwrap(), 1e-9);
        assert_eq!(f.value(None, "tol_rel", 1e-8).unwrap(), 1e-6);
        assert_eq!(f.value::<usize>(None, "max_steps", 10).unwrap(), 40);
        assert_eq!(f.value::<usize>(None, "jobs", 2).unwrap(), 2);
        assert_eq!(ConfigFile::default().value(None, "threads", 1usize).unwrap(), 1);
    }

    #[test]
    fn errors_name_the_line() {
        let e = ConfigFile::parse("tol_rel = 1e-6\nbogus\n", "c.cfg").unwrap_err();
        assert!(e.to_string().contains("c.cfg:2"));
        let e = ConfigFile::parse("colour = red\n", "c.cfg").unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        let f = ConfigFile::parse("threads = many\n", "c.cfg").unwrap();
        let e = f.value::<usize>(None, "threads", 1).unwrap_err();
        assert!(e.to_string().contains("c.cfg:1"));
    }
}
