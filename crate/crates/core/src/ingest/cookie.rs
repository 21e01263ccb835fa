//! Cookie extraction from `Set-Cookie`, `Cookie` and script-set strings.

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Timestamp, Trace};
use crate::psl::SuffixRules;
use crate::url::parse_url;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SetMechanism {
    HttpResponse,
    HttpRequestEcho,
    JavaScript,
}

/// The observation that produced a cookie record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SetEvent {
    Transaction(u64),
    Script(usize),
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CookieRecord {
    pub user_id: String,
    /// Domain that set the cookie, without a leading dot.
    pub owner: String,
    pub key: String,
    pub value: String,
    pub set_mechanism: SetMechanism,
    pub expires: Option<Timestamp>,
    /// Seconds.
    pub max_age: Option<i64>,
    pub set_at: Timestamp,
    pub event: SetEvent,
}

impl CookieRecord {
    /// `Max-Age` takes precedence over `Expires`.
    pub fn effective_expiry(&self) -> Option<Timestamp> {
        match self.max_age {
            Some(secs) => Some(self.set_at.saturating_add(secs.saturating_mul(1000))),
            None => self.expires,
        }
    }

    pub fn has_expiry_attributes(&self) -> bool {
        self.max_age.is_some() || self.expires.is_some()
    }
}

/// Parse a cookie date in one of the classic HTTP date formats (plus the
/// dashed Netscape variant common in `Set-Cookie`). Returns epoch millis.
pub fn parse_cookie_date(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Ok(t) = httpdate::parse_http_date(s) {
        let ms = match t.duration_since(std::time::UNIX_EPOCH) {
            Ok(d) => d.as_millis() as i64,
            Err(e) => -(e.duration().as_millis() as i64),
        };
        return Some(ms);
    }
    const FORMATS: [&str; 4] = [
        "%a, %d-%b-%Y %H:%M:%S GMT",
        "%a, %d %b %Y %H:%M:%S GMT",
        "%A, %d-%b-%Y %H:%M:%S GMT",
        "%a, %d-%b-%y %H:%M:%S GMT",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp_millis())
}

pub fn parse_set_cookie(line: &str, request_host: &str, ts: Timestamp, uid: &str) -> Result<CookieRecord> {
    let mut parts = line.split(';');
    let pair = parts.next().unwrap_or_default();
    let (key, value) = pair
        .split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Error::MalformedCookie(line.to_owned()))?;

    let mut expires = None;
    let mut max_age = None;
    let mut domain = None;
    for attr in parts {
        let (name, val) = match attr.split_once('=') {
            Some((n, v)) => (n.trim(), v.trim()),
            None => (attr.trim(), ""),
        };
        match name.to_ascii_lowercase().as_str() {
            // Unparseable dates leave the cookie without an expiry.
            "expires" => expires = parse_cookie_date(val),
            "max-age" => max_age = val.parse::<i64>().ok(),
            "domain" => {
                let d = val.trim_start_matches('.').to_ascii_lowercase();
                if !d.is_empty() {
                    domain = Some(d);
                }
            }
            _ => {}
        }
    }

    Ok(CookieRecord {
        user_id: uid.to_owned(),
        owner: domain.unwrap_or_else(|| request_host.to_ascii_lowercase()),
        key: key.to_owned(),
        value: value.to_owned(),
        set_mechanism: SetMechanism::HttpResponse,
        expires,
        max_age,
        set_at: ts,
        event: SetEvent::Unknown,
    })
}

/// Parse a request `Cookie` header. Returns the records plus the number of
/// pairs skipped for lacking `=`.
pub fn parse_cookie_header(
    line: &str,
    request_host: &str,
    ts: Timestamp,
    uid: &str,
) -> (Vec<CookieRecord>, usize) {
    let mut skipped = 0;
    let records = line
        .split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .filter_map(|p| match p.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Some(CookieRecord {
                user_id: uid.to_owned(),
                owner: request_host.to_ascii_lowercase(),
                key: k.trim().to_owned(),
                value: v.trim().to_owned(),
                set_mechanism: SetMechanism::HttpRequestEcho,
                expires: None,
                max_age: None,
                set_at: ts,
                event: SetEvent::Unknown,
            }),
            _ => {
                skipped += 1;
                None
            }
        })
        .collect();
    (records, skipped)
}

/// Script-set cookies are owned by the registrable domain of the frame that
/// set them. Returns the records plus a count of skipped observations.
pub fn ingest_js_cookies(trace: &Trace, rules: &SuffixRules) -> (Vec<CookieRecord>, usize) {
    let mut skipped = 0;
    let mut out = Vec::new();
    for (idx, js) in trace.js_cookie_sets.iter().enumerate() {
        let Some(host) = parse_url(&js.frame_url).ok().map(|u| u.host).filter(|h| !h.is_empty()) else {
            log::warn!("user {}: unparsable frame URL {:?}", trace.user_id, js.frame_url);
            skipped += 1;
            continue;
        };
        let owner = rules.registrable_domain(&host).unwrap_or(host);
        match parse_set_cookie(&js.cookie, &owner, js.timestamp, &trace.user_id) {
            Ok(mut rec) => {
                // A Domain attribute cannot move a script cookie off its page.
                rec.owner = owner;
                rec.set_mechanism = SetMechanism::JavaScript;
                rec.event = SetEvent::Script(idx);
                out.push(rec);
            }
            Err(e) => {
                log::warn!("user {}: {e}", trace.user_id);
                skipped += 1;
            }
        }
    }
    (out, skipped)
}
