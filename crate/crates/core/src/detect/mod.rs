//! Sync detection: location scanning and the three detectors.

pub mod known_pairs;
pub mod scan;
pub mod shared;
pub mod two_pass;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use known_pairs::{detect_known_pairs, KnownPairs};
pub use scan::{scan_id_looking, scan_transaction};
pub use shared::detect_shared;
pub use two_pass::{detect_two_pass, is_id_looking, IdSharingEvent, Occurrence};

use crate::entity::EntityResolver;
use crate::error::{Error, Result};
use crate::identifiers::IdentifierSet;
use crate::model::{normalize_events, DetectionMethod, Entity, EntityMode, Location, Relation, SyncEvent, Timestamp, Trace};
use crate::profile::Profile;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Detection {
    pub events: Vec<SyncEvent>,
    pub id_sharing: Vec<IdSharingEvent>,
}

/// Run every detector the profile selects. Known-pair detection needs a
/// pair list.
pub fn detect(
    traces: &[Trace],
    identifiers: &IdentifierSet,
    profile: &Profile,
    resolver: &EntityResolver,
    pairs: Option<&KnownPairs>,
) -> Result<Detection> {
    let mut out = Detection::default();
    for method in &profile.detectors {
        match method {
            DetectionMethod::SharedIdHeuristic => {
                out.events.extend(detect_shared(traces, identifiers, profile, resolver));
            }
            DetectionMethod::TwoPassIdLooking => {
                let (sharing, events) = detect_two_pass(traces, identifiers, profile, resolver);
                out.id_sharing = sharing;
                out.events.extend(events);
            }
            DetectionMethod::KnownPairList => {
                let pairs = pairs.ok_or_else(|| Error::Config("known-pair detection needs a pair list".into()))?;
                let resolver = resolver.with_mode(profile.entity_mode);
                out.events.extend(detect_known_pairs(traces, pairs, &resolver));
            }
        }
    }
    normalize_events(&mut out.events);
    Ok(out)
}

/// One line of the event export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub user: String,
    pub seq: u64,
    pub ts: Timestamp,
    pub value: String,
    pub sender: String,
    pub receiver: String,
    pub location: String,
    pub method: String,
    pub relation: Relation,
    /// Entity mode of `sender` and `receiver`.
    #[serde(default = "default_mode")]
    pub mode: EntityMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
}

fn default_mode() -> EntityMode {
    EntityMode::Etld1
}

impl From<&SyncEvent> for EventRecord {
    fn from(e: &SyncEvent) -> Self {
        EventRecord {
            user: e.user_id.clone(),
            seq: e.seq_no,
            ts: e.timestamp,
            value: e.shared_value.clone(),
            sender: e.sender.name.clone(),
            receiver: e.receiver.name.clone(),
            location: e.location.as_str().to_owned(),
            method: e.method.as_str().to_owned(),
            relation: e.relation,
            mode: e.sender.mode,
            key: e.matched_key.clone(),
        }
    }
}

impl TryFrom<EventRecord> for SyncEvent {
    type Error = String;

    fn try_from(r: EventRecord) -> std::result::Result<Self, String> {
        Ok(SyncEvent {
            user_id: r.user,
            seq_no: r.seq,
            timestamp: r.ts,
            shared_value: r.value,
            sender: Entity::new(r.mode, r.sender),
            receiver: Entity::new(r.mode, r.receiver),
            location: r.location.parse::<Location>()?,
            method: r.method.parse::<DetectionMethod>()?,
            relation: r.relation,
            matched_key: r.key,
        })
    }
}

pub fn write_events_jsonl<W: Write>(events: &[SyncEvent], mut out: W) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, &EventRecord::from(e))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read an event export. Lines with a `"kind"` other than `"event"` are
/// ignored, so ground-truth files read as their planted events.
pub fn read_events_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<SyncEvent>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        match value.get("kind").and_then(|k| k.as_str()) {
            None | Some("event") => {}
            Some(_) => continue,
        }
        let rec: EventRecord = serde_json::from_value(value).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        events.push(SyncEvent::try_from(rec).map_err(|e| Error::parse(origin, i + 1, e))?);
    }
    Ok(events)
}

pub fn load_events_jsonl(path: &Path) -> Result<Vec<SyncEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_events_jsonl(std::io::BufReader::new(file), path)
}
