//! The shared-identifier heuristic: an identifier of a user appearing in a
//! request to an entity other than its owner.

use crate::entity::EntityResolver;
use crate::identifiers::pipeline::values_by_user;
use crate::identifiers::IdentifierSet;
use crate::model::{DetectionMethod, Entity, HttpTransaction, Relation, SyncEvent, Trace};
use crate::party::{label_party, PartyRelation};
use crate::profile::Profile;

use super::scan::scan_transaction;

/// Context shared by the detectors for one transaction.
pub(crate) struct TxContext {
    pub receiver: Entity,
    pub landing: Entity,
    /// The request passes the optional third-party-of-landing test.
    pub gate_open: bool,
}

impl TxContext {
    pub fn new(tx: &HttpTransaction, profile: &Profile, resolver: &EntityResolver) -> Self {
        let gate_open = !profile.require_third_party_receiver
            || label_party(&tx.landing_page, &tx.url, profile.party_strategy, resolver).relation
                == PartyRelation::ThirdParty;
        TxContext {
            receiver: resolver.resolve(&tx.url.host),
            landing: resolver.resolve(&tx.landing_page.host),
            gate_open,
        }
    }

    pub fn relation(&self, sender: &Entity) -> Relation {
        if *sender == self.landing {
            Relation::FirstPartyLeak
        } else {
            Relation::ThirdPartySync
        }
    }
}

pub fn detect_shared(
    traces: &[Trace],
    identifiers: &IdentifierSet,
    profile: &Profile,
    resolver: &EntityResolver,
) -> Vec<SyncEvent> {
    let resolver = resolver.with_mode(profile.entity_mode);
    let values = values_by_user(identifiers);
    let mut events = Vec::new();
    for trace in traces {
        let Some(known) = values.get(trace.user_id.as_str()) else {
            continue;
        };
        if known.is_empty() {
            continue;
        }
        for tx in &trace.transactions {
            let tokens = scan_transaction(tx, &profile.locations, &profile.filter);
            let mut ctx: Option<TxContext> = None;
            for (location, token) in tokens {
                let Some(ids) = known.get(token.as_str()) else {
                    continue;
                };
                let ctx = ctx.get_or_insert_with(|| TxContext::new(tx, profile, &resolver));
                if !ctx.gate_open {
                    break;
                }
                for id in ids {
                    if id.owner == ctx.receiver {
                        continue;
                    }
                    events.push(SyncEvent {
                        user_id: trace.user_id.clone(),
                        seq_no: tx.seq_no,
                        timestamp: tx.timestamp,
                        shared_value: token.clone(),
                        sender: id.owner.clone(),
                        receiver: ctx.receiver.clone(),
                        location,
                        method: DetectionMethod::SharedIdHeuristic,
                        relation: ctx.relation(&id.owner),
                        matched_key: Some(id.source_key.clone()),
                    });
                }
            }
        }
    }
    crate::model::normalize_events(&mut events);
    events
}
