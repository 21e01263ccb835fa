//! Public suffix rule sets in the published `public_suffix_list.dat` format.

use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

static BUNDLED_LIST: &str = include_str!("../data/public_suffix_list.dat");

/// Longest-match suffix rules with wildcard (`*.`) and exception (`!`)
/// semantics. Rules are stored in their ASCII (punycode) form.
#[derive(Debug, Clone, Default)]
pub struct SuffixRules {
    normal: HashSet<String>,
    /// Parents of wildcard rules: `*.ck` is stored as `ck`.
    wildcard: HashSet<String>,
    /// Exception rules without the `!`.
    exception: HashSet<String>,
}

impl SuffixRules {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The snapshot of the public suffix list shipped with the crate.
    pub fn bundled() -> Arc<SuffixRules> {
        static RULES: OnceLock<Arc<SuffixRules>> = OnceLock::new();
        RULES
            .get_or_init(|| {
                Arc::new(
                    SuffixRules::parse(BUNDLED_LIST, "<bundled public_suffix_list.dat>")
                        .expect("bundled suffix list parses"),
                )
            })
            .clone()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let mut rules = SuffixRules::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule = line.split_whitespace().next().unwrap_or_default();
            let (set, body) = if let Some(rest) = rule.strip_prefix('!') {
                (&mut rules.exception, rest)
            } else if let Some(rest) = rule.strip_prefix("*.") {
                (&mut rules.wildcard, rest)
            } else {
                (&mut rules.normal, rule)
            };
            let ascii = to_ascii(body).ok_or_else(|| {
                Error::parse(origin.as_ref(), idx + 1, format!("invalid suffix rule {rule:?}"))
            })?;
            if ascii.contains('*') || ascii.contains('!') {
                return Err(Error::parse(
                    origin.as_ref(),
                    idx + 1,
                    format!("unsupported rule shape {rule:?}"),
                ));
            }
            set.insert(ascii);
        }
        Ok(rules)
    }

    pub fn len(&self) -> usize {
        self.normal.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels of `ascii_host` forming its public suffix.
    fn suffix_label_count(&self, ascii_host: &str) -> usize {
        // Byte offsets at which each candidate suffix starts.
        let mut starts = vec![0];
        starts.extend(ascii_host.match_indices('.').map(|(i, _)| i + 1));
        let n = starts.len();

        for (i, &s) in starts.iter().enumerate() {
            if self.exception.contains(&ascii_host[s..]) {
                return n - i - 1;
            }
        }
        for (i, &s) in starts.iter().enumerate() {
            let candidate = &ascii_host[s..];
            if self.normal.contains(candidate) {
                return n - i;
            }
            if i + 1 < n && self.wildcard.contains(&ascii_host[starts[i + 1]..]) {
                return n - i;
            }
        }
        // Implicit `*` rule.
        1
    }

    /// Public suffix of `host`, in the same script (Unicode or punycode) as
    /// the input.
    pub fn public_suffix(&self, host: &str) -> Option<String> {
        let (original, ascii) = normalize(host)?;
        let count = self.suffix_label_count(&ascii);
        Some(last_labels(&original, count))
    }

    /// Registrable domain (eTLD+1) of `host`, or `None` when the host is
    /// itself a public suffix, an IP literal, or not a valid name.
    pub fn registrable_domain(&self, host: &str) -> Option<String> {
        let (original, ascii) = normalize(host)?;
        let count = self.suffix_label_count(&ascii);
        let labels = original.split('.').count();
        if labels <= count {
            return None;
        }
        Some(last_labels(&original, count + 1))
    }
}

fn last_labels(host: &str, count: usize) -> String {
    let labels: Vec<&str> = host.split('.').collect();
    labels[labels.len().saturating_sub(count)..].join(".")
}

fn to_ascii(name: &str) -> Option<String> {
    if name.is_ascii() {
        return Some(name.to_ascii_lowercase());
    }
    idna::domain_to_ascii(name).ok()
}

/// Lowercased original form plus its ASCII form, or `None` for inputs that
/// cannot carry a registrable domain.
fn normalize(host: &str) -> Option<(String, String)> {
    if host.is_empty() || host.starts_with('.') || crate::url::is_ip_literal(host) {
        return None;
    }
    let host = host.strip_suffix('.').unwrap_or(host);
    if host.split('.').any(str::is_empty) {
        return None;
    }
    let original = host.to_lowercase();
    let ascii = to_ascii(&original)?;
    if ascii.split('.').count() != original.split('.').count() {
        return None;
    }
    Some((original, ascii))
}
