//! Token harvesting from the places a request can carry a value.

use std::collections::HashSet;

use serde_json::Value;

use crate::identifiers::split_on_delimiters;
use crate::model::{HttpTransaction, Location, PostBody};
use crate::profile::{FilterConfig, ScanLocationSet};
use crate::url::{parse_query, percent_decode, UrlParts};

struct Harvest<'a> {
    cfg: &'a FilterConfig,
    unwrap: bool,
    seen: HashSet<(Location, String)>,
    out: Vec<(Location, String)>,
}

impl Harvest<'_> {
    fn push(&mut self, loc: Location, token: String) {
        if !token.is_empty() && self.seen.insert((loc, token.clone())) {
            self.out.push((loc, token));
        }
    }

    /// Already-decoded text (URL components).
    fn decoded(&mut self, loc: Location, text: &str) {
        for t in split_on_delimiters(text, &self.cfg.delimiters, self.unwrap) {
            self.push(loc, t);
        }
    }

    /// Raw text: split first, then decode each token once.
    fn raw(&mut self, loc: Location, text: &str) {
        for t in split_on_delimiters(text, &self.cfg.delimiters, self.unwrap) {
            self.push(loc, percent_decode(&t));
        }
    }

    fn url(&mut self, loc: Location, url: &UrlParts, path: bool, query: bool) {
        if path {
            for seg in &url.path_segments {
                self.decoded(loc, seg);
            }
        }
        if query {
            for (_, v) in &url.query_pairs {
                self.decoded(loc, v);
            }
        }
    }

    fn json(&mut self, v: &Value) {
        match v {
            Value::String(s) => self.raw(Location::PostBody, s),
            Value::Array(items) => items.iter().for_each(|i| self.json(i)),
            Value::Object(map) => map.values().for_each(|i| self.json(i)),
            _ => {}
        }
    }

    fn post_body(&mut self, body: &PostBody) {
        let text = String::from_utf8_lossy(&body.bytes);
        if body.is_form_urlencoded() {
            for (_, v) in parse_query(&text) {
                self.decoded(Location::PostBody, &v);
            }
            return;
        }
        if body.is_json() {
            if let Ok(v) = serde_json::from_str::<Value>(&text) {
                self.json(&v);
                return;
            }
        }
        self.raw(Location::PostBody, &text);
    }
}

/// Harvest `(location, token)` pairs from one transaction. Tokens are
/// delimiter-split values (never keys), percent-decoded exactly once, and
/// unique per location.
pub fn scan_transaction(tx: &HttpTransaction, locations: &ScanLocationSet, cfg: &FilterConfig) -> Vec<(Location, String)> {
    let mut h = Harvest {
        cfg,
        unwrap: cfg.unwraps_key_value(),
        seen: HashSet::new(),
        out: Vec::new(),
    };
    if locations.contains(Location::QueryParam) {
        h.url(Location::QueryParam, &tx.url, false, true);
    }
    if locations.contains(Location::Path) {
        h.url(Location::Path, &tx.url, true, false);
    }
    if locations.contains(Location::RefererUrl) {
        match (&tx.referer, tx.request_headers.get("referer")) {
            (Some(r), _) => h.url(Location::RefererUrl, r, true, true),
            (None, Some(raw)) => log::warn!("user {} seq {}: unparsable Referer {raw:?}", tx.user_id, tx.seq_no),
            (None, None) => {}
        }
    }
    if locations.contains(Location::RedirectLocation) {
        if let Some(loc) = tx.redirect_location() {
            match tx.url.join(loc) {
                Ok(target) => h.url(Location::RedirectLocation, &target, true, true),
                Err(_) => log::warn!("user {} seq {}: unparsable Location {loc:?}", tx.user_id, tx.seq_no),
            }
        }
    }
    if locations.contains(Location::NonstandardHeader) {
        for (name, value) in tx.request_headers.iter().chain(tx.response_headers.iter()) {
            if !locations.is_standard_header(name) {
                h.raw(Location::NonstandardHeader, value);
            }
        }
    }
    if locations.contains(Location::PostBody) {
        if let Some(body) = &tx.post_body {
            h.post_body(body);
        }
    }
    h.out
}

/// The harvest used by the two-pass method: GET requests only, from the
/// path, query and Referer (and the redirect target when enabled).
pub fn scan_id_looking(tx: &HttpTransaction, cfg: &FilterConfig, include_redirects: bool) -> Vec<(Location, String)> {
    if tx.method != "GET" {
        return Vec::new();
    }
    let mut locs = vec![Location::QueryParam, Location::Path, Location::RefererUrl];
    if include_redirects {
        locs.push(Location::RedirectLocation);
    }
    scan_transaction(tx, &ScanLocationSet::new(locs), cfg)
}
