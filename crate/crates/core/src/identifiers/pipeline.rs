//! The full identifier filter chain.
//!
//! Order: cookie store, session, delimiter split, length, charset,
//! multi/dynamic value, keyword, similarity, cross-user.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::filters::{filter_cross_user, passes_charset, passes_length, passes_session, split_on_delimiters};
use super::similarity::ratcliff_obershelp;
use super::store::{build_cookie_store, CookieStore};
use crate::entity::EntityResolver;
use crate::model::{Entity, Timestamp, Trace};
use crate::profile::{FilterConfig, Profile, SimilarityScope};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identifier {
    pub value: String,
    pub owner: Entity,
    /// Cookie owner domain as observed.
    pub owner_host: String,
    pub source_key: String,
    pub user_id: String,
    pub filter_trail: Vec<String>,
    pub first_seen: Timestamp,
}

/// Identifiers per user id.
pub type IdentifierSet = BTreeMap<String, Vec<Identifier>>;

/// Candidate tokens from one store, after every per-user filter except
/// similarity.
fn candidates(store: &CookieStore, cfg: &FilterConfig, resolver: &EntityResolver) -> Vec<Identifier> {
    let mut trail: Vec<&str> = Vec::new();
    if cfg.session_policy != Default::default() {
        trail.push("session");
    }
    if !cfg.delimiters.is_empty() {
        trail.push("split");
    }
    trail.push("length");
    if cfg.charset_extra.is_some() {
        trail.push("charset");
    }
    if cfg.drop_multi_value_keys {
        trail.push("multi_value");
    }
    if cfg.drop_dynamic_keys {
        trail.push("dynamic_value");
    }
    if cfg.keyword_blocklist.is_some() {
        trail.push("keyword");
    }
    let trail: Vec<String> = trail.into_iter().map(str::to_owned).collect();

    let unwrap = cfg.unwraps_key_value();
    let shaped = |v: &str| {
        passes_length(v, cfg.min_len, cfg.max_len)
            && cfg.charset_extra.as_ref().is_none_or(|extra| passes_charset(v, extra))
    };

    let mut per_record: Vec<(usize, Vec<String>)> = Vec::new();
    let mut multi_keys: HashSet<(&str, &str)> = HashSet::new();
    for (i, rec) in store.records.iter().enumerate() {
        if !passes_session(rec, cfg.session_policy, store.reference_time, cfg.strict_echo_expiry) {
            continue;
        }
        let tokens = if cfg.delimiters.is_empty() {
            vec![rec.value.clone()]
        } else {
            split_on_delimiters(&rec.value, &cfg.delimiters, unwrap)
        };
        let mut tokens: Vec<String> = tokens.into_iter().filter(|t| shaped(t)).collect();
        let mut seen = HashSet::new();
        tokens.retain(|t| seen.insert(t.clone()));
        if tokens.len() > 1 {
            multi_keys.insert((rec.owner.as_str(), rec.key.as_str()));
        }
        per_record.push((i, tokens));
    }

    let mut out = Vec::new();
    for (i, tokens) in per_record {
        let rec = &store.records[i];
        if cfg.drop_multi_value_keys && multi_keys.contains(&(rec.owner.as_str(), rec.key.as_str())) {
            continue;
        }
        if cfg.drop_dynamic_keys && store.history_of(&rec.owner, &rec.key).len() > 1 {
            continue;
        }
        let owner = resolver.resolve(&rec.owner);
        for t in tokens {
            if cfg
                .keyword_blocklist
                .as_ref()
                .is_some_and(|b| b.blocks(Some(&rec.key), &t))
            {
                continue;
            }
            out.push(Identifier {
                value: t,
                owner: owner.clone(),
                owner_host: rec.owner.clone(),
                source_key: rec.key.clone(),
                user_id: store.user_id.clone(),
                filter_trail: trail.clone(),
                first_seen: rec.set_at,
            });
        }
    }
    // One identifier per (value, owner); the first observation wins.
    let mut seen = HashSet::new();
    out.retain(|id| seen.insert((id.value.clone(), id.owner.clone())));
    out
}

fn similarity_pass(ids: Vec<Identifier>, threshold: f64, scope: SimilarityScope) -> Vec<Identifier> {
    let mut kept: Vec<Identifier> = Vec::with_capacity(ids.len());
    for id in ids {
        let similar = kept.iter().any(|k| {
            (scope == SimilarityScope::AllWithinUser || k.owner == id.owner)
                && ratcliff_obershelp(&id.value, &k.value) > threshold
        });
        if !similar {
            kept.push(id);
        }
    }
    for id in &mut kept {
        id.filter_trail.push("similarity".to_owned());
    }
    kept
}

/// Per-user identifiers for a single trace, without cross-user filtering.
pub fn extract_user_identifiers(trace: &Trace, profile: &Profile, resolver: &EntityResolver) -> Vec<Identifier> {
    let resolver = resolver.with_mode(profile.entity_mode);
    let store = build_cookie_store(trace, profile, &resolver.suffix_rules);
    let ids = candidates(&store, &profile.filter, &resolver);
    match profile.filter.similarity_threshold {
        Some(t) => similarity_pass(ids, t, profile.filter.similarity_scope),
        None => ids,
    }
}

/// Run the full chain over every user. Traces of the same user are merged
/// first, so the result does not depend on input order.
pub fn extract_identifiers(traces: &[Trace], profile: &Profile, resolver: &EntityResolver) -> IdentifierSet {
    let mut by_user: BTreeMap<&str, Vec<&Trace>> = BTreeMap::new();
    for t in traces {
        by_user.entry(&t.user_id).or_default().push(t);
    }
    let per_user: Vec<(String, Vec<Identifier>)> = by_user
        .into_iter()
        .map(|(user, ts)| {
            let ids = if ts.len() == 1 {
                extract_user_identifiers(ts[0], profile, resolver)
            } else {
                let mut merged = Trace::new(user);
                let mut parts: Vec<&Trace> = ts;
                parts.sort_by_key(|t| t.start_time());
                for t in parts {
                    merged.transactions.extend(t.transactions.iter().cloned());
                    merged.js_cookie_sets.extend(t.js_cookie_sets.iter().cloned());
                }
                merged.sort();
                extract_user_identifiers(&merged, profile, resolver)
            };
            (user.to_owned(), ids)
        })
        .collect();

    if !profile.filter.cross_user_dedup {
        return per_user.into_iter().collect();
    }
    let (filtered, applied) = filter_cross_user(per_user.into_iter().map(|(u, ids)| (u, ids.into_iter().map(ValueOf).collect())).collect());
    filtered
        .into_iter()
        .map(|(u, ids): (String, Vec<ValueOf>)| {
            let ids = ids
                .into_iter()
                .map(|ValueOf(mut id)| {
                    if applied {
                        id.filter_trail.push("cross_user".to_owned());
                    }
                    id
                })
                .collect();
            (u, ids)
        })
        .collect()
}

/// Lets the string filters operate on identifiers by value.
struct ValueOf(Identifier);

impl AsRef<str> for ValueOf {
    fn as_ref(&self) -> &str {
        &self.0.value
    }
}

/// Identifier values of one user, for matching.
pub fn values_by_user(ids: &IdentifierSet) -> HashMap<&str, HashMap<&str, Vec<&Identifier>>> {
    ids.iter()
        .map(|(user, list)| {
            let mut m: HashMap<&str, Vec<&Identifier>> = HashMap::new();
            for id in list {
                m.entry(id.value.as_str()).or_default().push(id);
            }
            (user.as_str(), m)
        })
        .collect()
}

/// One line of the identifier export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentifierRecord {
    pub user: String,
    pub owner: String,
    pub key: String,
    pub value: String,
    pub filters: Vec<String>,
}

impl From<&Identifier> for IdentifierRecord {
    fn from(id: &Identifier) -> Self {
        IdentifierRecord {
            user: id.user_id.clone(),
            owner: id.owner.name.clone(),
            key: id.source_key.clone(),
            value: id.value.clone(),
            filters: id.filter_trail.clone(),
        }
    }
}

pub fn write_identifiers_jsonl<W: Write>(ids: &IdentifierSet, mut out: W) -> std::io::Result<()> {
    for id in ids.values().flatten() {
        serde_json::to_writer(&mut out, &IdentifierRecord::from(id))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
