//! The per-user cookie store: every cookie the user's browser held.

use std::collections::HashMap;

use crate::ingest::{ingest_js_cookies, parse_cookie_header, parse_set_cookie, CookieRecord, SetEvent, SetMechanism};
use crate::model::{Timestamp, Trace};
use crate::profile::Profile;
use crate::psl::SuffixRules;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CookieStore {
    pub user_id: String,
    /// Collapsed records in first-seen order.
    pub records: Vec<CookieRecord>,
    /// Distinct values per (owner, key), in first-seen order.
    pub history: HashMap<(String, String), Vec<String>>,
    /// Reference time for expiry filtering (trace start).
    pub reference_time: Timestamp,
    /// Malformed cookie strings and `Cookie` pairs that were skipped.
    pub skipped: usize,
}

impl CookieStore {
    pub fn history_of(&self, owner: &str, key: &str) -> &[String] {
        self.history
            .get(&(owner.to_owned(), key.to_owned()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `host` is `owner` or one of its subdomains.
fn domain_matches(host: &str, owner: &str) -> bool {
    host == owner || host.strip_suffix(owner).is_some_and(|rest| rest.ends_with('.'))
}

/// Collect Set-Cookie, request-echo (when the profile enables them) and
/// script-set cookies, collapsing duplicates of (owner, key, value) to the
/// earliest observation.
pub fn build_cookie_store(trace: &Trace, profile: &Profile, rules: &SuffixRules) -> CookieStore {
    let uid = &trace.user_id;
    let mut raw: Vec<CookieRecord> = Vec::new();
    let mut skipped = 0;
    for tx in &trace.transactions {
        let host = &tx.url.host;
        for line in &tx.set_cookie_lines {
            match parse_set_cookie(line, host, tx.timestamp, uid) {
                Ok(mut rec) => {
                    rec.event = SetEvent::Transaction(tx.seq_no);
                    raw.push(rec);
                }
                Err(e) => {
                    log::debug!("user {uid} seq {}: {e}", tx.seq_no);
                    skipped += 1;
                }
            }
        }
        if profile.include_request_echo {
            for line in tx.cookie_header_lines() {
                let (recs, n) = parse_cookie_header(line, host, tx.timestamp, uid);
                skipped += n;
                raw.extend(recs.into_iter().map(|mut r| {
                    r.event = SetEvent::Transaction(tx.seq_no);
                    r
                }));
            }
        }
    }
    let (js, n) = ingest_js_cookies(trace, rules);
    skipped += n;
    raw.extend(js);
    // Stable: ties keep transaction order, then script order.
    raw.sort_by_key(|r| r.set_at);

    // An echo is attributed to the owner of a matching set cookie when its
    // host lies under that owner's domain.
    let mut set_owners: HashMap<(String, String), Vec<String>> = HashMap::new();
    for r in raw.iter().filter(|r| r.set_mechanism != SetMechanism::HttpRequestEcho) {
        let owners = set_owners.entry((r.key.clone(), r.value.clone())).or_default();
        if !owners.contains(&r.owner) {
            owners.push(r.owner.clone());
        }
    }
    for r in raw.iter_mut().filter(|r| r.set_mechanism == SetMechanism::HttpRequestEcho) {
        if let Some(owners) = set_owners.get(&(r.key.clone(), r.value.clone())) {
            if let Some(o) = owners.iter().find(|o| domain_matches(&r.owner, o)) {
                r.owner = o.clone();
            }
        }
    }

    let mut index: HashMap<(String, String, String), usize> = HashMap::new();
    let mut records: Vec<CookieRecord> = Vec::new();
    let mut history: HashMap<(String, String), Vec<String>> = HashMap::new();
    for r in raw {
        let values = history.entry((r.owner.clone(), r.key.clone())).or_default();
        if !values.contains(&r.value) {
            values.push(r.value.clone());
        }
        let k = (r.owner.clone(), r.key.clone(), r.value.clone());
        match index.get(&k) {
            None => {
                index.insert(k, records.len());
                records.push(r);
            }
            Some(&i) => {
                let kept = &mut records[i];
                // The echo came first; expiry comes from the real set event.
                if kept.set_mechanism == SetMechanism::HttpRequestEcho
                    && r.set_mechanism != SetMechanism::HttpRequestEcho
                {
                    kept.set_mechanism = r.set_mechanism;
                    kept.expires = r.effective_expiry();
                    kept.max_age = None;
                }
            }
        }
    }

    CookieStore {
        user_id: uid.clone(),
        records,
        history,
        reference_time: trace.start_time().unwrap_or(0),
        skipped,
    }
}
