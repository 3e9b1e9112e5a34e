//! Line-oriented `key: value` config dialect shared by every text format in
//! this crate (hand models, scenarios, safety envelopes, pose-pair files,
//! episode manifests).
//!
//! Grammar, in full:
//!
//! ```text
//! file    = line*
//! line    = blank | comment | entry
//! comment = "#" anything
//! entry   = key ":" value
//! key     = non-empty, no whitespace, no ":"
//! value   = trimmed remainder of the line (may contain spaces)
//! ```
//!
//! Keys may repeat; consumers decide whether a key is single- or
//! multi-valued. Values that hold several fields are whitespace-separated.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key: value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key {key}: {msg}")]
    InvalidValue {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("missing required key {key}")]
    MissingKey { key: String },
}

impl ConfigError {
    /// Stable machine-parsable category tag, used by the CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            ConfigError::Syntax { .. } => "ConfigSyntax",
            ConfigError::InvalidValue { .. } => "ConfigInvalidValue",
            ConfigError::MissingKey { .. } => "ConfigMissingKey",
        }
    }
}

/// One parsed `key: value` entry with its 1-based source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Parse the dialect into entries, preserving file order and repeats.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once(':') else {
            return Err(ConfigError::Syntax {
                line,
                text: trimmed.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() || key.chars().any(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                text: trimmed.to_string(),
            });
        }
        entries.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(entries)
}

/// Entry list with typed accessors. Repeated keys keep every occurrence.
#[derive(Debug, Clone)]
pub struct Document {
    entries: Vec<Entry>,
    by_key: HashMap<String, Vec<usize>>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let mut by_key: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_key.entry(e.key.clone()).or_default().push(i);
        }
        Ok(Document { entries, by_key })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Last occurrence of `key`, or None.
    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.by_key
            .get(key)
            .and_then(|ix| ix.last())
            .map(|&i| &self.entries[i])
    }

    /// All occurrences of `key` in file order.
    pub fn get_all(&self, key: &str) -> Vec<&Entry> {
        self.by_key
            .get(key)
            .map(|ix| ix.iter().map(|&i| &self.entries[i]).collect())
            .unwrap_or_default()
    }

    pub fn require(&self, key: &str) -> Result<&Entry, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key).map(|e| e.parse_f64()).transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key).map(|e| e.parse_u64()).transpose()
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        Ok(self.get_u64(key)?.unwrap_or(default))
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        self.get(key).map(|e| e.parse_bool()).transpose()
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.get_bool(key)?.unwrap_or(default))
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }
}

impl Entry {
    fn invalid(&self, msg: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            line: self.line,
            key: self.key.clone(),
            msg: msg.into(),
        }
    }

    pub fn parse_f64(&self) -> Result<f64, ConfigError> {
        let v: f64 = self
            .value
            .parse()
            .map_err(|_| self.invalid(format!("not a number: {:?}", self.value)))?;
        if !v.is_finite() {
            return Err(self.invalid("must be finite"));
        }
        Ok(v)
    }

    pub fn parse_u64(&self) -> Result<u64, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.invalid(format!("not an unsigned integer: {:?}", self.value)))
    }

    pub fn parse_bool(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(self.invalid(format!("not a boolean: {other:?}"))),
        }
    }

    /// Whitespace-separated fields of the value.
    pub fn fields(&self) -> Vec<&str> {
        self.value.split_whitespace().collect()
    }

    /// Parse the value as exactly `n` floats.
    pub fn parse_f64s(&self, n: usize) -> Result<Vec<f64>, ConfigError> {
        let fields = self.fields();
        if fields.len() != n {
            return Err(self.invalid(format!("expected {n} fields, got {}", fields.len())));
        }
        fields
            .iter()
            .map(|f| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| self.invalid(format!("not a number: {f:?}")))?;
                if !v.is_finite() {
                    return Err(self.invalid("must be finite"));
                }
                Ok(v)
            })
            .collect()
    }
}
