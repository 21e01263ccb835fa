//! The two-pass method: first find ID-looking strings sent to several
//! receivers, then keep those that are known identifiers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::entity::EntityResolver;
use crate::identifiers::filters::{passes_charset, passes_length};
use crate::identifiers::pipeline::values_by_user;
use crate::identifiers::IdentifierSet;
use crate::model::{DetectionMethod, Entity, Location, SyncEvent, Timestamp, Trace};
use crate::profile::{FilterConfig, Profile, TwoPassCountMode};

use super::scan::scan_id_looking;
use super::shared::TxContext;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub seq_no: u64,
    pub timestamp: Timestamp,
    pub location: Location,
    pub receiver: Entity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdSharingEvent {
    pub user_id: String,
    pub token: String,
    /// Every carrying (transaction, location), in sequence order.
    pub occurrences: Vec<Occurrence>,
}

/// Length and charset shape of an identifier.
pub fn is_id_looking(token: &str, cfg: &FilterConfig) -> bool {
    passes_length(token, cfg.min_len, cfg.max_len)
        && cfg.charset_extra.as_ref().is_none_or(|extra| passes_charset(token, extra))
}

/// Whether the occurrences of a token amount to sharing.
pub fn is_shared(occurrences: &[Occurrence], mode: TwoPassCountMode) -> bool {
    match mode {
        TwoPassCountMode::Entities => {
            let receivers: BTreeSet<&Entity> = occurrences.iter().map(|o| &o.receiver).collect();
            receivers.len() >= 2
        }
        TwoPassCountMode::Requests => {
            let requests: BTreeSet<u64> = occurrences.iter().map(|o| o.seq_no).collect();
            requests.len() >= 2
        }
    }
}

pub fn detect_two_pass(
    traces: &[Trace],
    identifiers: &IdentifierSet,
    profile: &Profile,
    resolver: &EntityResolver,
) -> (Vec<IdSharingEvent>, Vec<SyncEvent>) {
    let resolver = resolver.with_mode(profile.entity_mode);
    let values = values_by_user(identifiers);
    let mut sharing = Vec::new();
    let mut events = Vec::new();
    for trace in traces {
        // Pass 1: token -> occurrences, per user.
        let mut table: BTreeMap<String, Vec<Occurrence>> = BTreeMap::new();
        let mut contexts: BTreeMap<u64, TxContext> = BTreeMap::new();
        for tx in &trace.transactions {
            for (location, token) in scan_id_looking(tx, &profile.filter, profile.two_pass.include_redirects) {
                if !is_id_looking(&token, &profile.filter) {
                    continue;
                }
                let ctx = contexts
                    .entry(tx.seq_no)
                    .or_insert_with(|| TxContext::new(tx, profile, &resolver));
                table.entry(token).or_default().push(Occurrence {
                    seq_no: tx.seq_no,
                    timestamp: tx.timestamp,
                    location,
                    receiver: ctx.receiver.clone(),
                });
            }
        }

        // Pass 2: intersect with the user's identifiers.
        let known = values.get(trace.user_id.as_str());
        for (token, mut occurrences) in table {
            if !is_shared(&occurrences, profile.two_pass.count_mode) {
                continue;
            }
            occurrences.sort_by_key(|o| (o.seq_no, o.location));
            if let Some(ids) = known.and_then(|k| k.get(token.as_str())) {
                for occ in &occurrences {
                    let ctx = &contexts[&occ.seq_no];
                    if !ctx.gate_open {
                        continue;
                    }
                    for id in ids {
                        if id.owner == occ.receiver {
                            continue;
                        }
                        events.push(SyncEvent {
                            user_id: trace.user_id.clone(),
                            seq_no: occ.seq_no,
                            timestamp: occ.timestamp,
                            shared_value: token.clone(),
                            sender: id.owner.clone(),
                            receiver: occ.receiver.clone(),
                            location: occ.location,
                            method: DetectionMethod::TwoPassIdLooking,
                            relation: ctx.relation(&id.owner),
                            matched_key: Some(id.source_key.clone()),
                        });
                    }
                }
            }
            sharing.push(IdSharingEvent {
                user_id: trace.user_id.clone(),
                token,
                occurrences,
            });
        }
    }
    sharing.sort_by(|a, b| (&a.user_id, &a.token).cmp(&(&b.user_id, &b.token)));
    crate::model::normalize_events(&mut events);
    (sharing, events)
}
