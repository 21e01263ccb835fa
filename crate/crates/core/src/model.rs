//! Shared domain types: transactions, traces, entities and sync events.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::url::UrlParts;

/// Milliseconds since the Unix epoch.
pub type Timestamp = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityMode {
    Domain,
    Etld1,
    Organization,
}

impl FromStr for EntityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "domain" | "string" => Ok(EntityMode::Domain),
            "etld1" | "etld+1" => Ok(EntityMode::Etld1),
            "organization" | "org" => Ok(EntityMode::Organization),
            other => Err(format!("unknown entity mode {other:?}")),
        }
    }
}

/// A domain, registrable domain or parent organization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub mode: EntityMode,
    pub name: String,
}

impl Entity {
    pub fn new(mode: EntityMode, name: impl AsRef<str>) -> Self {
        let name = name.as_ref().trim().to_lowercase();
        debug_assert!(!name.is_empty(), "entity names are non-empty");
        Entity { mode, name }
    }

    pub fn domain(name: impl AsRef<str>) -> Self {
        Self::new(EntityMode::Domain, name)
    }

    pub fn etld1(name: impl AsRef<str>) -> Self {
        Self::new(EntityMode::Etld1, name)
    }

    pub fn organization(name: impl AsRef<str>) -> Self {
        Self::new(EntityMode::Organization, name)
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Ordered header multimap with lowercased names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headers(pub Vec<(String, String)>);

impl Headers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, value: impl Into<String>) {
        self.0.push((name.to_ascii_lowercase(), value.into()));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        let name = name.to_ascii_lowercase();
        self.0.iter().find(|(n, _)| *n == name).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, name: &str) -> impl Iterator<Item = &'a str> + 'a {
        let name = name.to_ascii_lowercase();
        self.0
            .iter()
            .filter(move |(n, _)| *n == name)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<N: AsRef<str>, V: Into<String>> FromIterator<(N, V)> for Headers {
    fn from_iter<I: IntoIterator<Item = (N, V)>>(iter: I) -> Self {
        let mut h = Headers::new();
        for (n, v) in iter {
            h.push(n.as_ref(), v);
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostBody {
    pub bytes: Vec<u8>,
    pub content_type: Option<String>,
}

impl PostBody {
    pub fn is_form_urlencoded(&self) -> bool {
        self.content_type
            .as_deref()
            .is_some_and(|t| t.to_ascii_lowercase().starts_with("application/x-www-form-urlencoded"))
    }

    pub fn is_json(&self) -> bool {
        self.content_type
            .as_deref()
            .is_some_and(|t| t.to_ascii_lowercase().contains("json"))
    }
}

/// One request/response pair observed in the context of a landing page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpTransaction {
    pub seq_no: u64,
    pub timestamp: Timestamp,
    pub user_id: String,
    pub landing_page: UrlParts,
    pub method: String,
    pub url: UrlParts,
    pub request_headers: Headers,
    pub referer: Option<UrlParts>,
    pub post_body: Option<PostBody>,
    pub response_status: u16,
    pub response_headers: Headers,
    pub set_cookie_lines: Vec<String>,
}

impl HttpTransaction {
    pub fn is_redirect(&self) -> bool {
        (300..400).contains(&self.response_status)
    }

    /// The `Location` header of a 3XX response.
    pub fn redirect_location(&self) -> Option<&str> {
        if self.is_redirect() {
            self.response_headers.get("location")
        } else {
            None
        }
    }

    /// A `Location` header on a non-3XX response; retained but not followed.
    pub fn has_stray_location(&self) -> bool {
        !self.is_redirect() && self.response_headers.get("location").is_some()
    }

    pub fn cookie_header_lines(&self) -> impl Iterator<Item = &str> {
        self.request_headers.get_all("cookie")
    }
}

/// A script-set cookie observation (`document.cookie = ...`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsCookieSet {
    pub timestamp: Timestamp,
    pub frame_url: String,
    pub cookie: String,
}

/// All traffic captured for one user (one instrumented browser instance).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub user_id: String,
    pub transactions: Vec<HttpTransaction>,
    pub js_cookie_sets: Vec<JsCookieSet>,
}

impl Trace {
    pub fn new(user_id: impl Into<String>) -> Self {
        Trace {
            user_id: user_id.into(),
            ..Default::default()
        }
    }

    /// Earliest observed timestamp, used as the reference time for expiry
    /// filtering.
    pub fn start_time(&self) -> Option<Timestamp> {
        let tx = self.transactions.iter().map(|t| t.timestamp);
        let js = self.js_cookie_sets.iter().map(|j| j.timestamp);
        tx.chain(js).min()
    }

    pub fn transaction(&self, seq_no: u64) -> Option<&HttpTransaction> {
        self.transactions
            .binary_search_by_key(&seq_no, |t| t.seq_no)
            .ok()
            .map(|i| &self.transactions[i])
    }

    /// Sort transactions by (timestamp, seq_no).
    pub fn sort(&mut self) {
        self.transactions.sort_by_key(|t| (t.timestamp, t.seq_no));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    QueryParam,
    Path,
    RefererUrl,
    RedirectLocation,
    NonstandardHeader,
    PostBody,
}

impl Location {
    pub const ALL: [Location; 6] = [
        Location::QueryParam,
        Location::Path,
        Location::RefererUrl,
        Location::RedirectLocation,
        Location::NonstandardHeader,
        Location::PostBody,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Location::QueryParam => "query_param",
            Location::Path => "path",
            Location::RefererUrl => "referer_url",
            Location::RedirectLocation => "redirect_location",
            Location::NonstandardHeader => "nonstandard_header",
            Location::PostBody => "post_body",
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Location {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "queryparam" | "query" | "params" | "param" => Ok(Location::QueryParam),
            "path" => Ok(Location::Path),
            "refererurl" | "referer" | "referrer" => Ok(Location::RefererUrl),
            "redirectlocation" | "redirect" | "location" => Ok(Location::RedirectLocation),
            "nonstandardheader" | "header" | "headers" => Ok(Location::NonstandardHeader),
            "postbody" | "post" | "body" => Ok(Location::PostBody),
            _ => Err(format!("unknown location {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectionMethod {
    #[serde(rename = "shared_id")]
    SharedIdHeuristic,
    #[serde(rename = "two_pass")]
    TwoPassIdLooking,
    #[serde(rename = "known_pair")]
    KnownPairList,
}

impl DetectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionMethod::SharedIdHeuristic => "shared_id",
            DetectionMethod::TwoPassIdLooking => "two_pass",
            DetectionMethod::KnownPairList => "known_pair",
        }
    }
}

impl FromStr for DetectionMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "shared_id" | "shared" | "sharedidheuristic" => Ok(DetectionMethod::SharedIdHeuristic),
            "two_pass" | "twopassidlooking" => Ok(DetectionMethod::TwoPassIdLooking),
            "known_pair" | "known_pairs" | "knownpairlist" => Ok(DetectionMethod::KnownPairList),
            other => Err(format!("unknown detection method {other:?}")),
        }
    }
}

/// Whether the shared identifier belongs to the first party of the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    FirstPartyLeak,
    ThirdPartySync,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::FirstPartyLeak => "first_party_leak",
            Relation::ThirdPartySync => "third_party_sync",
        }
    }
}

/// A detected share of a value with another entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyncEvent {
    pub user_id: String,
    pub seq_no: u64,
    pub timestamp: Timestamp,
    pub shared_value: String,
    pub sender: Entity,
    pub receiver: Entity,
    pub location: Location,
    pub method: DetectionMethod,
    pub relation: Relation,
    /// Cookie key of the matched identifier, when there is one.
    pub matched_key: Option<String>,
}

impl SyncEvent {
    /// Events are unique on this key.
    pub fn dedup_key(&self) -> (&str, u64, &str, Location, DetectionMethod) {
        (
            &self.user_id,
            self.seq_no,
            &self.shared_value,
            self.location,
            self.method,
        )
    }
}

/// Sort by (user, seq_no, value, location, method) and drop duplicates.
pub fn normalize_events(events: &mut Vec<SyncEvent>) {
    events.sort_by(|a, b| a.dedup_key().cmp(&b.dedup_key()));
    events.dedup_by(|a, b| a.dedup_key() == b.dedup_key());
}
