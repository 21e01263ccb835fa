//! Named parameterizations of the identifier filters and detectors.
//!
//! Profiles are TOML documents. Every key is optional; a profile may name a
//! base with `extends` and override individual fields:
//!
//! ```toml
//! name = "my-study"
//! extends = "englehardt2016"
//! locations = ["query_param", "path", "post_body"]
//!
//! [filter]
//! min_len = 8
//! session_policy = { kind = "drop_expiring_before", days = 30 }
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identifiers::keywords::KeywordBlocklist;
use crate::model::{DetectionMethod, EntityMode, Location};
use crate::party::PartyStrategy;

const PRESETS: &[(&str, &str)] = &[
    ("olejnik2014", include_str!("../data/profiles/olejnik2014.toml")),
    ("acar2014", include_str!("../data/profiles/acar2014.toml")),
    ("englehardt2016", include_str!("../data/profiles/englehardt2016.toml")),
    ("fouad2020", include_str!("../data/profiles/fouad2020.toml")),
    ("papadogiannakis2021", include_str!("../data/profiles/papadogiannakis2021.toml")),
    ("papadopoulos2019", include_str!("../data/profiles/papadopoulos2019.toml")),
    ("ghosh2015", include_str!("../data/profiles/ghosh2015.toml")),
    ("header_scan", include_str!("../data/profiles/header_scan.toml")),
    ("urban2020", include_str!("../data/profiles/urban2020.toml")),
    ("synth", include_str!("../data/profiles/synth.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionPolicy {
    #[default]
    Keep,
    DropNoExpiry,
    DropExpiringBefore { days: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityScope {
    /// Compare against every earlier value of the same user.
    #[default]
    AllWithinUser,
    /// Compare only against earlier values with the same owner.
    SameOwner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Exclusive lower bound on character count.
    pub min_len: usize,
    /// Inclusive upper bound.
    pub max_len: Option<usize>,
    /// Characters allowed besides ASCII alphanumerics; `None` disables the
    /// charset filter.
    pub charset_extra: Option<Vec<char>>,
    pub delimiters: Vec<char>,
    /// Values more similar than this (strictly) to an earlier kept value
    /// are dropped.
    pub similarity_threshold: Option<f64>,
    pub similarity_scope: SimilarityScope,
    pub drop_multi_value_keys: bool,
    pub drop_dynamic_keys: bool,
    pub keyword_blocklist: Option<KeywordBlocklist>,
    pub cross_user_dedup: bool,
    pub session_policy: SessionPolicy,
    /// Treat request-echo cookies with unknown expiry as session cookies.
    pub strict_echo_expiry: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_len: 10,
            max_len: None,
            charset_extra: None,
            delimiters: vec!['&', ';'],
            similarity_threshold: None,
            similarity_scope: SimilarityScope::default(),
            drop_multi_value_keys: false,
            drop_dynamic_keys: false,
            keyword_blocklist: None,
            cross_user_dedup: false,
            session_policy: SessionPolicy::Keep,
            strict_echo_expiry: false,
        }
    }
}

impl FilterConfig {
    /// A configuration with every filter disabled.
    pub fn permissive() -> Self {
        FilterConfig {
            min_len: 0,
            delimiters: Vec::new(),
            ..Default::default()
        }
    }

    /// `key=value` tokens are unwrapped unless `=` is an identifier
    /// character.
    pub fn unwraps_key_value(&self) -> bool {
        !self
            .charset_extra
            .as_ref()
            .is_some_and(|extra| extra.contains(&'='))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(max) = self.max_len {
            if max < self.min_len {
                return Err(Error::Config(format!("max_len {max} < min_len {}", self.min_len)));
            }
        }
        if let Some(t) = self.similarity_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("similarity threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanLocationSet {
    pub enabled: BTreeSet<Location>,
    /// Lowercase standard header names (a trailing `*` makes a prefix) that
    /// are not scanned as nonstandard headers.
    pub standard_headers: Vec<String>,
}

impl ScanLocationSet {
    pub fn new(locations: impl IntoIterator<Item = Location>) -> Self {
        ScanLocationSet {
            enabled: locations.into_iter().collect(),
            standard_headers: default_standard_headers(),
        }
    }

    pub fn all() -> Self {
        Self::new(Location::ALL)
    }

    pub fn contains(&self, loc: Location) -> bool {
        self.enabled.contains(&loc)
    }

    pub fn is_standard_header(&self, name: &str) -> bool {
        name.starts_with(':')
            || self.standard_headers.iter().any(|h| match h.strip_suffix('*') {
                Some(prefix) => name.starts_with(prefix),
                None => h == name,
            })
    }
}

pub fn default_standard_headers() -> Vec<String> {
    include_str!("../data/standard_headers.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TwoPassCountMode {
    /// A token is shared once it reached two distinct receiver entities.
    #[default]
    Entities,
    /// A token is shared once it appeared in two requests.
    Requests,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TwoPassConfig {
    pub count_mode: TwoPassCountMode,
    pub include_redirects: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub name: String,
    pub filter: FilterConfig,
    pub entity_mode: EntityMode,
    pub party_strategy: PartyStrategy,
    pub locations: ScanLocationSet,
    /// Additionally require the receiver to be a third party of the
    /// landing page.
    pub require_third_party_receiver: bool,
    /// Seed the cookie store with values seen only in `Cookie` headers.
    pub include_request_echo: bool,
    pub two_pass: TwoPassConfig,
    pub detectors: BTreeSet<DetectionMethod>,
}

impl Default for Profile {
    fn default() -> Self {
        Profile {
            name: "default".to_owned(),
            filter: FilterConfig::default(),
            entity_mode: EntityMode::Etld1,
            party_strategy: PartyStrategy::Etld1,
            locations: ScanLocationSet::all(),
            require_third_party_receiver: false,
            include_request_echo: true,
            two_pass: TwoPassConfig::default(),
            detectors: [DetectionMethod::SharedIdHeuristic].into_iter().collect(),
        }
    }
}

/// On-disk shape: every field optional so files can override a base.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: Option<String>,
    extends: Option<String>,
    entity_mode: Option<EntityMode>,
    party_mode: Option<String>,
    locations: Option<Vec<String>>,
    standard_headers: Option<Vec<String>>,
    require_third_party_receiver: Option<bool>,
    include_request_echo: Option<bool>,
    detectors: Option<Vec<String>>,
    #[serde(default)]
    filter: FilterFile,
    two_pass: Option<TwoPassFile>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterFile {
    min_len: Option<usize>,
    max_len: Option<usize>,
    charset_extra: Option<String>,
    no_charset: Option<bool>,
    delimiters: Option<String>,
    similarity_threshold: Option<f64>,
    similarity_scope: Option<SimilarityScope>,
    drop_multi_value_keys: Option<bool>,
    drop_dynamic_keys: Option<bool>,
    keyword_filter: Option<bool>,
    keywords_file: Option<String>,
    cross_user_dedup: Option<bool>,
    session_policy: Option<SessionPolicy>,
    strict_echo_expiry: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TwoPassFile {
    count_mode: Option<TwoPassCountMode>,
    include_redirects: Option<bool>,
}

impl Profile {
    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    pub fn preset(name: &str) -> Option<Profile> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Profile::from_toml(text, None).expect("bundled profile parses"))
    }

    /// Resolve a preset name first, then a file path.
    pub fn resolve(name_or_path: &str) -> Result<Profile> {
        if let Some(p) = Profile::preset(name_or_path) {
            return Ok(p);
        }
        let path = Path::new(name_or_path);
        if path.exists() {
            return Profile::load(path);
        }
        Err(Error::Config(format!(
            "unknown profile {name_or_path:?} (presets: {})",
            Profile::preset_names().collect::<Vec<_>>().join(", ")
        )))
    }

    pub fn load(path: &Path) -> Result<Profile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Profile::from_toml(&text, path.parent())
    }

    /// Parse a profile document. Relative `keywords_file` paths resolve
    /// against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Profile> {
        let file: ProfileFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("profile: {e}")))?;
        let mut p = match &file.extends {
            Some(base) => Profile::resolve(base)?,
            None => Profile::default(),
        };
        file.apply(&mut p, base_dir)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if self.locations.enabled.is_empty() {
            return Err(Error::Config("profile scans no locations".into()));
        }
        Ok(())
    }
}

impl ProfileFile {
    fn apply(self, p: &mut Profile, base_dir: Option<&Path>) -> Result<()> {
        if let Some(v) = self.name {
            p.name = v;
        }
        if let Some(v) = self.entity_mode {
            p.entity_mode = v;
        }
        if let Some(v) = self.party_mode {
            p.party_strategy = v.parse().map_err(Error::Config)?;
        }
        if let Some(v) = self.locations {
            let locs = v
                .iter()
                .map(|s| s.parse::<Location>())
                .collect::<std::result::Result<BTreeSet<_>, _>>()
                .map_err(Error::Config)?;
            p.locations.enabled = locs;
        }
        if let Some(v) = self.standard_headers {
            p.locations.standard_headers = v.into_iter().map(|h| h.to_ascii_lowercase()).collect();
        }
        if let Some(v) = self.require_third_party_receiver {
            p.require_third_party_receiver = v;
        }
        if let Some(v) = self.include_request_echo {
            p.include_request_echo = v;
        }
        if let Some(v) = self.detectors {
            p.detectors = v
                .iter()
                .map(|s| s.parse::<DetectionMethod>())
                .collect::<std::result::Result<_, _>>()
                .map_err(Error::Config)?;
        }
        if let Some(tp) = self.two_pass {
            if let Some(v) = tp.count_mode {
                p.two_pass.count_mode = v;
            }
            if let Some(v) = tp.include_redirects {
                p.two_pass.include_redirects = v;
            }
        }

        let f = self.filter;
        let cfg = &mut p.filter;
        if let Some(v) = f.min_len {
            cfg.min_len = v;
        }
        if f.max_len.is_some() {
            cfg.max_len = f.max_len;
        }
        if let Some(v) = f.charset_extra {
            cfg.charset_extra = Some(v.chars().collect());
        }
        if f.no_charset == Some(true) {
            cfg.charset_extra = None;
        }
        if let Some(v) = f.delimiters {
            cfg.delimiters = v.chars().collect();
        }
        if f.similarity_threshold.is_some() {
            cfg.similarity_threshold = f.similarity_threshold;
        }
        if let Some(v) = f.similarity_scope {
            cfg.similarity_scope = v;
        }
        if let Some(v) = f.drop_multi_value_keys {
            cfg.drop_multi_value_keys = v;
        }
        if let Some(v) = f.drop_dynamic_keys {
            cfg.drop_dynamic_keys = v;
        }
        match (f.keyword_filter, f.keywords_file) {
            (Some(false), _) => cfg.keyword_blocklist = None,
            (_, Some(path)) => {
                let path = match base_dir {
                    Some(dir) if Path::new(&path).is_relative() => dir.join(path),
                    _ => path.into(),
                };
                cfg.keyword_blocklist = Some(KeywordBlocklist::load(&path)?);
            }
            (Some(true), None) => {
                if cfg.keyword_blocklist.is_none() {
                    cfg.keyword_blocklist = Some(KeywordBlocklist::bundled());
                }
            }
            (None, None) => {}
        }
        if let Some(v) = f.cross_user_dedup {
            cfg.cross_user_dedup = v;
        }
        if let Some(v) = f.session_policy {
            cfg.session_policy = v;
        }
        if let Some(v) = f.strict_echo_expiry {
            cfg.strict_echo_expiry = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in Profile::preset_names() {
            let p = Profile::preset(name).unwrap();
            assert_eq!(p.name, name);
            p.validate().unwrap();
        }
    }

    #[test]
    fn extends_and_overrides() {
        let p = Profile::from_toml(
            "name = \"x\"\nextends = \"englehardt2016\"\n[filter]\nmin_len = 2\n",
            None,
        )
        .unwrap();
        assert_eq!(p.filter.min_len, 2);
        assert_eq!(p.filter.max_len, Some(100));
        assert_eq!(p.filter.similarity_threshold, Some(0.66));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Profile::from_toml("[filter]\nmin_len = 10\nmax_len = 5\n", None).is_err());
        assert!(Profile::from_toml("[filter]\nsimilarity_threshold = 1.5\n", None).is_err());
        assert!(Profile::from_toml("locations = []\n", None).is_err());
        assert!(Profile::from_toml("locations = [\"nowhere\"]\n", None).is_err());
        assert!(Profile::from_toml("bogus = 1\n", None).is_err());
        assert!(Profile::resolve("no-such-profile").is_err());
    }

    #[test]
    fn header_allowlist() {
        let s = ScanLocationSet::all();
        assert!(s.is_standard_header("user-agent"));
        assert!(s.is_standard_header("sec-fetch-mode"));
        assert!(s.is_standard_header(":authority"));
        assert!(!s.is_standard_header("x-partner-uid"));
        assert!(s.standard_headers.len() >= 50);
    }

    #[test]
    fn equals_sign_controls_unwrapping() {
        let mut cfg = FilterConfig::default();
        assert!(cfg.unwraps_key_value());
        cfg.charset_extra = Some(vec!['-', '_', '=']);
        assert!(!cfg.unwraps_key_value());
    }
}
