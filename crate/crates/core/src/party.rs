//! First/third-party labeling of (landing page, request) pairs.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entity::{entity_of, EntityResolver};
use crate::error::{Error, Result};
use crate::model::{Entity, EntityMode};
use crate::url::UrlParts;

/// Registrable domain → organization table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OrgMap {
    map: HashMap<String, String>,
    /// Lines that overwrote an earlier entry for the same domain.
    pub duplicate_warnings: usize,
}

impl OrgMap {
    pub fn from_pairs<D: AsRef<str>, O: AsRef<str>>(pairs: impl IntoIterator<Item = (D, O)>) -> Self {
        let mut m = OrgMap::default();
        for (d, o) in pairs {
            m.insert(d.as_ref(), o.as_ref());
        }
        m
    }

    fn insert(&mut self, domain: &str, org: &str) {
        let prev = self
            .map
            .insert(domain.trim().to_lowercase(), org.trim().to_owned());
        if prev.is_some() {
            self.duplicate_warnings += 1;
        }
    }

    pub fn get(&self, registrable_domain: &str) -> Option<&str> {
        self.map.get(registrable_domain).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let mut m = OrgMap::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (domain, org) = line
                .split_once('\t')
                .filter(|(d, o)| !d.trim().is_empty() && !o.trim().is_empty())
                .ok_or_else(|| {
                    Error::parse(origin.as_ref(), idx + 1, "expected `domain<TAB>organization`")
                })?;
            m.insert(domain, org);
        }
        if m.duplicate_warnings > 0 {
            log::warn!(
                "{}: {} duplicate domain line(s), last entry wins",
                origin.as_ref().display(),
                m.duplicate_warnings
            );
        }
        Ok(m)
    }
}

pub fn load_org_map(path: impl AsRef<Path>) -> Result<OrgMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    OrgMap::parse(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PartyStrategy {
    StringMatch,
    #[default]
    Etld1,
    Organization,
}

impl PartyStrategy {
    pub fn entity_mode(self) -> EntityMode {
        match self {
            PartyStrategy::StringMatch => EntityMode::Domain,
            PartyStrategy::Etld1 => EntityMode::Etld1,
            PartyStrategy::Organization => EntityMode::Organization,
        }
    }
}

impl FromStr for PartyStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "string" | "string_match" | "domain" => Ok(PartyStrategy::StringMatch),
            "etld1" | "etld+1" => Ok(PartyStrategy::Etld1),
            "org" | "organization" => Ok(PartyStrategy::Organization),
            other => Err(format!("unknown party mode {other:?}")),
        }
    }
}

impl fmt::Display for PartyStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyStrategy::StringMatch => "string",
            PartyStrategy::Etld1 => "etld1",
            PartyStrategy::Organization => "org",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartyRelation {
    FirstParty,
    ThirdParty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyBasis {
    pub strategy: PartyStrategy,
    /// Set when a host had no registrable domain and was compared verbatim.
    pub host_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyLabel {
    pub relation: PartyRelation,
    pub basis: PartyBasis,
    pub landing_entity: Entity,
    pub request_entity: Entity,
}

/// Label `request` as first or third party relative to `landing`.
/// Ports and schemes are ignored.
pub fn label_party(
    landing: &UrlParts,
    request: &UrlParts,
    strategy: PartyStrategy,
    tables: &EntityResolver,
) -> PartyLabel {
    let mode = strategy.entity_mode();
    let mut host_fallback = false;
    let mut resolve = |host: &str| {
        entity_of(host, mode, &tables.suffix_rules, &tables.org_map).unwrap_or_else(|_| {
            host_fallback = true;
            Entity::new(EntityMode::Domain, if host.is_empty() { "-" } else { host })
        })
    };
    let landing_entity = resolve(&landing.host);
    let request_entity = resolve(&request.host);
    let relation = if landing_entity == request_entity {
        PartyRelation::FirstParty
    } else {
        PartyRelation::ThirdParty
    };
    PartyLabel {
        relation,
        basis: PartyBasis {
            strategy,
            host_fallback,
        },
        landing_entity,
        request_entity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::url::parse_url;

    fn url(s: &str) -> UrlParts {
        parse_url(s).unwrap()
    }

    #[test]
    fn tracker_is_third_party() {
        let t = EntityResolver::bundled(EntityMode::Etld1);
        let l = label_party(&url("https://website3.com/"), &url("https://tracker1.com/p.js"), PartyStrategy::Etld1, &t);
        assert_eq!(l.relation, PartyRelation::ThirdParty);
    }

    #[test]
    fn strategies_diverge_on_subdomains() {
        let t = EntityResolver::bundled(EntityMode::Etld1);
        let landing = url("https://news.example.com/");
        let cdn = url("https://cdn.example.com/x.css");
        assert_eq!(label_party(&landing, &cdn, PartyStrategy::Etld1, &t).relation, PartyRelation::FirstParty);
        assert_eq!(
            label_party(&landing, &cdn, PartyStrategy::StringMatch, &t).relation,
            PartyRelation::ThirdParty
        );
    }

    #[test]
    fn shared_parent_org_is_first_party() {
        let t = EntityResolver::new(
            EntityMode::Organization,
            crate::psl::SuffixRules::bundled(),
            std::sync::Arc::new(OrgMap::from_pairs([("a.com", "X"), ("b.com", "X")])),
        );
        let l = label_party(&url("https://a.com/"), &url("https://b.com/"), PartyStrategy::Organization, &t);
        assert_eq!(l.relation, PartyRelation::FirstParty);
    }

    #[test]
    fn ip_hosts_fall_back_to_host_comparison() {
        let t = EntityResolver::bundled(EntityMode::Etld1);
        let l = label_party(&url("http://10.0.0.1/"), &url("http://10.0.0.1:8080/x"), PartyStrategy::Etld1, &t);
        assert_eq!(l.relation, PartyRelation::FirstParty);
        assert!(l.basis.host_fallback);
    }

    #[test]
    fn org_map_parsing() {
        let m = OrgMap::parse("# comment\ndoubleclick.net\tGoogle\n\n", "orgs.tsv").unwrap();
        assert_eq!(m.get("doubleclick.net"), Some("Google"));
        let dup = OrgMap::parse("a.com\tX\na.com\tY\n", "orgs.tsv").unwrap();
        assert_eq!(dup.get("a.com"), Some("Y"));
        assert_eq!(dup.duplicate_warnings, 1);
        assert!(OrgMap::parse("", "orgs.tsv").unwrap().is_empty());
        let err = OrgMap::parse("a.com X\n", "orgs.tsv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
