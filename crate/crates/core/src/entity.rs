//! Entity resolution: host → domain, registrable domain or organization.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Entity, EntityMode};
use crate::party::OrgMap;
use crate::psl::SuffixRules;
use crate::url::is_ip_literal;

/// Resolve `domain` to an entity under `mode`.
///
/// Returns `UnresolvableSuffix` for IP literals and hosts that are public
/// suffixes themselves; [`EntityResolver::resolve`] turns that into a
/// whole-host entity.
pub fn entity_of(
    domain: &str,
    mode: EntityMode,
    suffix_rules: &SuffixRules,
    org_map: &OrgMap,
) -> Result<Entity> {
    let host = domain.trim().trim_end_matches('.').to_lowercase();
    if host.is_empty() {
        return Err(Error::UnresolvableSuffix(domain.to_owned()));
    }
    match mode {
        EntityMode::Domain => Ok(Entity::new(mode, host)),
        EntityMode::Etld1 | EntityMode::Organization => {
            if is_ip_literal(&host) {
                return Err(Error::UnresolvableSuffix(host));
            }
            let registrable = suffix_rules
                .registrable_domain(&host)
                .ok_or_else(|| Error::UnresolvableSuffix(host.clone()))?;
            if mode == EntityMode::Organization {
                if let Some(org) = org_map.get(&registrable) {
                    return Ok(Entity::new(mode, org));
                }
            }
            Ok(Entity::new(mode, registrable))
        }
    }
}

/// Bundles an entity mode with the tables it needs.
#[derive(Debug, Clone)]
pub struct EntityResolver {
    pub mode: EntityMode,
    pub suffix_rules: Arc<SuffixRules>,
    pub org_map: Arc<OrgMap>,
}

impl EntityResolver {
    pub fn new(mode: EntityMode, suffix_rules: Arc<SuffixRules>, org_map: Arc<OrgMap>) -> Self {
        EntityResolver {
            mode,
            suffix_rules,
            org_map,
        }
    }

    /// Resolver over the bundled suffix list and an empty organization map.
    pub fn bundled(mode: EntityMode) -> Self {
        Self::new(mode, SuffixRules::bundled(), Arc::new(OrgMap::default()))
    }

    pub fn with_mode(&self, mode: EntityMode) -> Self {
        EntityResolver {
            mode,
            ..self.clone()
        }
    }

    /// Like [`entity_of`], but unresolvable hosts become their own entity.
    pub fn resolve(&self, host: &str) -> Entity {
        entity_of(host, self.mode, &self.suffix_rules, &self.org_map)
            .unwrap_or_else(|_| Entity::new(self.mode, fallback_name(host)))
    }

    pub fn registrable_or_host(&self, host: &str) -> String {
        self.suffix_rules
            .registrable_domain(host)
            .unwrap_or_else(|| fallback_name(host))
    }
}

fn fallback_name(host: &str) -> String {
    let h = host.trim().trim_end_matches('.').to_lowercase();
    if h.is_empty() {
        "-".to_owned()
    } else {
        h
    }
}
