//! Flat `key = value` documents used for both recipes and run configs.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored.
//! Keys are consumed as they are read, and [`KeyValues::finish`] rejects any
//! key nobody asked for, so typos surface instead of silently falling back to
//! defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct KeyValues {
    path: PathBuf,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::config(format!(
                    "{}:{line_no}: expected `key = value`, got `{line}`",
                    path.display()
                )));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(CliError::config(format!(
                    "{}:{line_no}: empty key",
                    path.display()
                )));
            }
            if let Some((_, first)) = entries.insert(key.clone(), (v.trim().to_string(), line_no)) {
                return Err(CliError::config(format!(
                    "{}:{line_no}: `{key}` already set on line {first}",
                    path.display()
                )));
            }
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Sets or replaces a value, as a command-line override would.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    pub fn require_str(&mut self, key: &str) -> Result<String> {
        self.take_str(key).ok_or_else(|| {
            CliError::config(format!("{}: missing required key `{key}`", self.path.display()))
        })
    }

    pub fn take<T>(&mut self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((raw, line)) = self.entries.remove(key) else {
            return Ok(None);
        };
        raw.parse::<T>().map(Some).map_err(|e| {
            CliError::config(format!(
                "{}:{line}: bad value `{raw}` for `{key}`: {e}",
                self.path.display()
            ))
        })
    }

    pub fn take_or<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn require<T>(&mut self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.take(key)? {
            Some(v) => Ok(v),
            None => Err(CliError::config(format!(
                "{}: missing required key `{key}`",
                self.path.display()
            ))),
        }
    }

    /// Errors if any key was never consumed.
    pub fn finish(self) -> Result<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(CliError::config(format!(
                "{}:{line}: unknown key `{key}`",
                self.path.display()
            )));
        }
        Ok(())
    }
}

/// Comma-separated list; an empty string gives an empty list.
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

/// Column indices such as `0, 16-20`; ranges are inclusive.
pub fn parse_indices(raw: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let lo: usize = a.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
                let hi: usize = b.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
                if hi < lo {
                    return Err(format!("`{part}`: empty range"));
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|e| format!("`{part}`: {e}"))?),
        }
    }
    Ok(out)
}
