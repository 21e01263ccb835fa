//! The individual identifier filters. Each works on any list of values
//! that can be viewed as strings and never reorders its input.

use std::collections::{HashMap, HashSet};

use super::keywords::KeywordBlocklist;
use super::similarity::ratcliff_obershelp;
use crate::ingest::{CookieRecord, SetMechanism};
use crate::model::Timestamp;
use crate::profile::SessionPolicy;

const DAY_MS: i64 = 24 * 60 * 60 * 1000;

/// Split at every delimiter, dropping empty tokens. With `unwrap_key_value`
/// a token `k=v` yields only `v`.
pub fn split_on_delimiters(value: &str, delimiters: &[char], unwrap_key_value: bool) -> Vec<String> {
    value
        .split(|c| delimiters.contains(&c))
        .filter(|t| !t.is_empty())
        .filter_map(|t| {
            if unwrap_key_value {
                match t.split_once('=') {
                    Some((_, v)) if !v.is_empty() => Some(v),
                    Some(_) => None,
                    None => Some(t),
                }
            } else {
                Some(t)
            }
        })
        .map(str::to_owned)
        .collect()
}

pub fn passes_length(v: &str, min_len: usize, max_len: Option<usize>) -> bool {
    let n = v.chars().count();
    n > min_len && max_len.is_none_or(|m| n <= m)
}

pub fn passes_charset(v: &str, allowed_extra: &[char]) -> bool {
    v.chars().all(|c| c.is_ascii_alphanumeric() || allowed_extra.contains(&c))
}

pub fn filter_length<T: AsRef<str>>(values: Vec<T>, min_len: usize, max_len: Option<usize>) -> Vec<T> {
    values
        .into_iter()
        .filter(|v| passes_length(v.as_ref(), min_len, max_len))
        .collect()
}

pub fn filter_charset<T: AsRef<str>>(values: Vec<T>, allowed_extra: &[char]) -> Vec<T> {
    values
        .into_iter()
        .filter(|v| passes_charset(v.as_ref(), allowed_extra))
        .collect()
}

pub fn filter_keywords<T: AsRef<str>>(values: Vec<T>, blocklist: &KeywordBlocklist) -> Vec<T> {
    values
        .into_iter()
        .filter(|v| !blocklist.blocks(None, v.as_ref()))
        .collect()
}

/// Scan in order, dropping any value strictly more similar than
/// `threshold` to a value already kept.
pub fn filter_similarity<T: AsRef<str>>(values: Vec<T>, threshold: f64) -> Vec<T> {
    let mut kept: Vec<T> = Vec::with_capacity(values.len());
    for v in values {
        let similar = kept
            .iter()
            .any(|w| ratcliff_obershelp(v.as_ref(), w.as_ref()) > threshold);
        if !similar {
            kept.push(v);
        }
    }
    kept
}

/// Drop values present in two or more users' sets. With fewer than two
/// users the input is returned unchanged and the flag is false.
pub fn filter_cross_user<T: AsRef<str>>(per_user: Vec<(String, Vec<T>)>) -> (Vec<(String, Vec<T>)>, bool) {
    let users: HashSet<&str> = per_user.iter().map(|(u, _)| u.as_str()).collect();
    if users.len() < 2 {
        log::warn!("cross-user filter needs at least two users; skipped");
        return (per_user, false);
    }
    let mut owners: HashMap<String, HashSet<String>> = HashMap::new();
    for (user, values) in &per_user {
        for v in values {
            owners
                .entry(v.as_ref().to_owned())
                .or_default()
                .insert(user.clone());
        }
    }
    let out = per_user
        .into_iter()
        .map(|(user, values)| {
            let values = values
                .into_iter()
                .filter(|v| owners.get(v.as_ref()).is_none_or(|u| u.len() < 2))
                .collect();
            (user, values)
        })
        .collect();
    (out, true)
}

/// Whether a cookie record survives the session policy.
pub fn passes_session(
    rec: &CookieRecord,
    policy: SessionPolicy,
    reference_time: Timestamp,
    strict_echo_expiry: bool,
) -> bool {
    if policy == SessionPolicy::Keep {
        return true;
    }
    // Echoed cookies whose Set-Cookie was never seen have unknown expiry.
    if rec.set_mechanism == SetMechanism::HttpRequestEcho && !rec.has_expiry_attributes() {
        return !strict_echo_expiry;
    }
    let Some(expiry) = rec.effective_expiry() else {
        return false;
    };
    match policy {
        SessionPolicy::Keep | SessionPolicy::DropNoExpiry => true,
        SessionPolicy::DropExpiringBefore { days } => expiry >= reference_time + i64::from(days) * DAY_MS,
    }
}

pub fn filter_session(
    records: Vec<CookieRecord>,
    policy: SessionPolicy,
    reference_time: Timestamp,
    strict_echo_expiry: bool,
) -> Vec<CookieRecord> {
    records
        .into_iter()
        .filter(|r| passes_session(r, policy, reference_time, strict_echo_expiry))
        .collect()
}
