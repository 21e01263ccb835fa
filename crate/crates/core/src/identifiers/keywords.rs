use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substring and file-extension blocklist, plus fixed date/timestamp
/// patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordBlocklist {
    pub substrings: Vec<String>,
    pub extensions: Vec<String>,
}

fn date_patterns() -> &'static [Regex] {
    static PATTERNS: OnceLock<Vec<Regex>> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        [
            // ISO dates, with or without time
            r"\d{4}-\d{2}-\d{2}",
            r"\d{4}/\d{2}/\d{2}",
            // epoch seconds or milliseconds, optionally fractional
            r"^\d{10}(\d{3})?(\.\d+)?$",
        ]
        .iter()
        .map(|p| Regex::new(p).expect("valid pattern"))
        .collect()
    })
}

impl KeywordBlocklist {
    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/keywords.txt"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// One lowercase entry per line; `ext:` marks a file extension; `#`
    /// starts a comment line.
    pub fn parse(text: &str) -> Self {
        let mut substrings = Vec::new();
        let mut extensions = Vec::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line.strip_prefix("ext:") {
                Some(ext) => extensions.push(ext.trim().to_lowercase()),
                None => substrings.push(line.to_lowercase()),
            }
        }
        KeywordBlocklist { substrings, extensions }
    }

    /// True when `value` (or the cookie `key` it came from) should be dropped.
    pub fn blocks(&self, key: Option<&str>, value: &str) -> bool {
        let lower = value.to_lowercase();
        if self.substrings.iter().any(|s| lower.contains(s.as_str())) {
            return true;
        }
        if self.extensions.iter().any(|e| lower.ends_with(e.as_str())) {
            return true;
        }
        if date_patterns().iter().any(|re| re.is_match(value)) {
            return true;
        }
        key.is_some_and(|k| {
            let k = k.to_lowercase();
            self.substrings.iter().any(|s| k.contains(s.as_str()))
        })
    }
}
