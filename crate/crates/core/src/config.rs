//! Flat `key=value` configuration text.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored. Vector
//! values are comma-separated. Later entries override earlier ones.

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

impl KvEntry {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: format!("{}: {}", self.key, message.into()),
        }
    }

    pub fn f64(&self) -> Result<f64> {
        let v: f64 = self
            .value
            .parse()
            .map_err(|_| self.err(format!("expected a number, got {:?}", self.value)))?;
        if !v.is_finite() {
            return Err(self.err("value must be finite"));
        }
        Ok(v)
    }

    pub fn u32(&self) -> Result<u32> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("expected an unsigned integer, got {:?}", self.value)))
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(self.err(format!("expected true/false, got {other:?}"))),
        }
    }

    pub fn vec3(&self) -> Result<Vec3> {
        let parts: Vec<&str> = self.value.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(self.err("expected three comma-separated numbers"));
        }
        let mut out = [0.0; 3];
        for (slot, p) in out.iter_mut().zip(&parts) {
            *slot = p
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.err(format!("bad vector component {p:?}")))?;
        }
        Ok(Vec3::from_array(out))
    }

    pub fn unknown_key(&self) -> Error {
        self.err("unknown key")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<KvEntry>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected key=value, got {content:?}"),
            })?;
            let key = k.trim();
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid key {key:?}"),
                });
            }
            entries.push(KvEntry {
                line,
                key: key.to_string(),
                value: v.trim().to_string(),
            });
        }
        Ok(Self { entries })
    }

    /// Adds `key=value` overrides, e.g. from command-line flags.
    pub fn push_override(&mut self, spec: &str) -> Result<()> {
        let mut extra = KvMap::parse(spec)?;
        for e in &mut extra.entries {
            e.line = 0;
        }
        self.entries.append(&mut extra.entries);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &KvEntry)> {
        self.entries.iter().map(|e| (e.key.as_str(), e))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose key carries `prefix.`, with the prefix stripped.
    pub fn scoped(&self, prefix: &str) -> KvMap {
        let p = format!("{prefix}.");
        KvMap {
            entries: self
                .entries
                .iter()
                .filter_map(|e| {
                    e.key.strip_prefix(&p).map(|k| KvEntry {
                        key: k.to_string(),
                        ..e.clone()
                    })
                })
                .collect(),
        }
    }

    /// Entries without any `scope.` prefix.
    pub fn unscoped(&self) -> KvMap {
        KvMap {
            entries: self
                .entries
                .iter()
                .filter(|e| !e.key.contains('.'))
                .cloned()
                .collect(),
        }
    }

    /// Distinct scope prefixes in first-seen order.
    pub fn scopes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if let Some((scope, _)) = e.key.split_once('.') {
                if !out.iter().any(|s| s == scope) {
                    out.push(scope.to_string());
                }
            }
        }
        out
    }
}
