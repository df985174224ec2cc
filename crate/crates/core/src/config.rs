//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. An optional first
//! non-comment line names the format and version, for example `antidote-sim v1`.
//! Keys may repeat; consumers decide whether that means "append" or "override".

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unsupported header `{found}`, expected `{expected}`")]
    Header {
        line: usize,
        found: String,
        expected: String,
    },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    Value {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("missing required key `{0}`")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl Entry {
    pub fn parse<T: FromStr>(&self) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.value.parse().map_err(|e: T::Err| self.invalid(e))
    }

    pub fn parse_bool(&self) -> Result<bool, ConfigError> {
        match self.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(true),
            "false" | "no" | "off" | "0" => Ok(false),
            _ => Err(self.invalid("expected a boolean")),
        }
    }

    /// Comma-separated list with surrounding whitespace trimmed and empty items dropped.
    pub fn list(&self) -> Vec<&str> {
        self.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect()
    }

    pub fn invalid(&self, reason: impl std::fmt::Display) -> ConfigError {
        ConfigError::Value {
            line: self.line,
            key: self.key.clone(),
            reason: reason.to_string(),
        }
    }

    pub fn unknown(&self) -> ConfigError {
        ConfigError::UnknownKey {
            line: self.line,
            key: self.key.clone(),
        }
    }
}

/// Parses `text`. When `header` is given, a first line equal to it is consumed;
/// any other first line that looks like a header (no `=`) is rejected.
pub fn parse_kv(text: &str, header: Option<&str>) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let is_first = std::mem::replace(&mut first, false);
        let Some((key, value)) = trimmed.split_once('=') else {
            match header {
                Some(h) if is_first && trimmed == h => continue,
                Some(h) if is_first => {
                    return Err(ConfigError::Header {
                        line,
                        found: trimmed.to_string(),
                        expected: h.to_string(),
                    })
                }
                _ => return Err(ConfigError::Syntax { line }),
            }
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line });
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}
