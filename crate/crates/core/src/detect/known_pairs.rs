//! Labeling by a list of known (referrer, request) tracker pairs.

use std::collections::HashSet;
use std::path::Path;

use crate::entity::EntityResolver;
use crate::error::{Error, Result};
use crate::model::{DetectionMethod, Location, Relation, SyncEvent, Trace};

/// Ordered (referrer entity, request entity) name pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnownPairs {
    pairs: HashSet<(String, String)>,
}

impl KnownPairs {
    pub fn from_pairs<A: AsRef<str>, B: AsRef<str>>(pairs: impl IntoIterator<Item = (A, B)>) -> Self {
        KnownPairs {
            pairs: pairs
                .into_iter()
                .map(|(a, b)| (a.as_ref().trim().to_lowercase(), b.as_ref().trim().to_lowercase()))
                .collect(),
        }
    }

    /// TSV `referrer-entity<TAB>request-entity`; `#` starts a comment line.
    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (a, b) = line
                .split_once('\t')
                .filter(|(a, b)| !a.trim().is_empty() && !b.trim().is_empty())
                .ok_or_else(|| Error::parse(origin.as_ref(), i + 1, "expected referrer<TAB>request"))?;
            pairs.push((a, b));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn contains(&self, referrer: &str, request: &str) -> bool {
        self.pairs.contains(&(referrer.to_owned(), request.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// One event per transaction whose (referer entity, request entity) pair is
/// listed. The shared value is empty: nothing is matched.
pub fn detect_known_pairs(traces: &[Trace], pairs: &KnownPairs, resolver: &EntityResolver) -> Vec<SyncEvent> {
    let mut events = Vec::new();
    for trace in traces {
        for tx in &trace.transactions {
            let Some(referer) = &tx.referer else {
                continue;
            };
            let sender = resolver.resolve(&referer.host);
            let receiver = resolver.resolve(&tx.url.host);
            if !pairs.contains(&sender.name, &receiver.name) {
                continue;
            }
            let relation = if sender == resolver.resolve(&tx.landing_page.host) {
                Relation::FirstPartyLeak
            } else {
                Relation::ThirdPartySync
            };
            events.push(SyncEvent {
                user_id: trace.user_id.clone(),
                seq_no: tx.seq_no,
                timestamp: tx.timestamp,
                shared_value: String::new(),
                sender,
                receiver,
                location: Location::RefererUrl,
                method: DetectionMethod::KnownPairList,
                relation,
                matched_key: None,
            });
        }
    }
    crate::model::normalize_events(&mut events);
    events
}
