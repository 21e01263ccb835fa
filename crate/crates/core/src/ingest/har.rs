//! HAR 1.2 archives.

use std::path::Path;

use chrono::DateTime;
use serde::Deserialize;
use serde_json::Value;

use super::{IngestOptions, IngestReport, OnError};
use crate::error::{Error, Result};
use crate::model::{Headers, HttpTransaction, PostBody, Timestamp, Trace};
use crate::url::{parse_url, UrlParts};

#[derive(Debug, Deserialize)]
struct Har {
    log: HarLog,
}

#[derive(Debug, Deserialize)]
struct HarLog {
    #[serde(default)]
    pages: Vec<HarPage>,
    entries: Vec<Value>,
}

#[derive(Debug, Deserialize)]
struct HarPage {
    id: String,
    #[serde(default)]
    title: String,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HarEntry {
    #[serde(default)]
    pageref: Option<String>,
    started_date_time: String,
    request: HarRequest,
    response: HarResponse,
    #[serde(default, rename = "_resourceType")]
    resource_type: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HarRequest {
    method: String,
    url: String,
    #[serde(default)]
    headers: Vec<HarHeader>,
    #[serde(default)]
    post_data: Option<HarPostData>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HarPostData {
    #[serde(default)]
    mime_type: Option<String>,
    #[serde(default)]
    text: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HarResponse {
    status: i64,
    #[serde(default)]
    headers: Vec<HarHeader>,
    #[serde(default)]
    content: Option<HarContent>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct HarContent {
    #[serde(default)]
    mime_type: Option<String>,
}

#[derive(Debug, Deserialize)]
struct HarHeader {
    name: String,
    value: String,
}

/// An entry that parsed, before landing pages and sequence numbers are
/// assigned.
struct Parsed {
    index: usize,
    ts: Timestamp,
    pageref: Option<String>,
    is_document: bool,
    tx: HttpTransaction,
}

fn parse_entry(value: Value, user: &str) -> std::result::Result<(HarEntry, Timestamp, UrlParts), String> {
    let entry: HarEntry = serde_json::from_value(value).map_err(|e| e.to_string())?;
    let ts = DateTime::parse_from_rfc3339(&entry.started_date_time)
        .map_err(|e| format!("startedDateTime: {e}"))?
        .timestamp_millis();
    let url = parse_url(&entry.request.url).map_err(|e| e.to_string())?;
    if !(100..=599).contains(&entry.response.status) {
        // Aborted requests are exported with status 0.
        return Err(format!("response status {} for {user}", entry.response.status));
    }
    Ok((entry, ts, url))
}

fn headers_from(list: &[HarHeader]) -> Headers {
    list.iter().map(|h| (h.name.as_str(), h.value.clone())).collect()
}

pub fn load_har(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<(Trace, IngestReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let user = opts.user_id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "user".to_owned())
    });
    parse_har(&text, path, &user, opts.on_error)
}

pub fn parse_har(text: &str, origin: &Path, user: &str, on_error: OnError) -> Result<(Trace, IngestReport)> {
    let har: Har = serde_json::from_str(text).map_err(|e| Error::parse(origin, 0, e.to_string()))?;
    let mut report = IngestReport::default();
    let mut parsed = Vec::new();

    for (index, value) in har.log.entries.into_iter().enumerate() {
        let (entry, ts, url) = match parse_entry(value, user) {
            Ok(ok) => ok,
            Err(msg) => match on_error {
                OnError::Fail => return Err(Error::parse(origin, index, format!("entry {index}: {msg}"))),
                OnError::Skip => {
                    log::warn!("{}: skipped entry {index}: {msg}", origin.display());
                    report.skipped += 1;
                    report.warnings += 1;
                    continue;
                }
            },
        };
        let request_headers = headers_from(&entry.request.headers);
        let response_headers = headers_from(&entry.response.headers);
        let referer = request_headers.get("referer").and_then(|r| parse_url(r).ok());
        // Firefox folds repeated Set-Cookie headers into one newline-joined value.
        let set_cookie_lines = response_headers
            .get_all("set-cookie")
            .flat_map(|v| v.split('\n'))
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        let post_body = entry.request.post_data.and_then(|p| {
            p.text.map(|t| PostBody {
                bytes: t.into_bytes(),
                content_type: p.mime_type.filter(|m| !m.is_empty()),
            })
        });
        let is_document = entry.resource_type.as_deref() == Some("document")
            || entry
                .response
                .content
                .as_ref()
                .and_then(|c| c.mime_type.as_deref())
                .is_some_and(|m| m.starts_with("text/html"));
        parsed.push(Parsed {
            index,
            ts,
            pageref: entry.pageref,
            is_document,
            tx: HttpTransaction {
                seq_no: 0,
                timestamp: ts,
                user_id: user.to_owned(),
                landing_page: url.clone(),
                method: entry.request.method.to_ascii_uppercase(),
                url,
                request_headers,
                referer,
                post_body,
                response_status: entry.response.status as u16,
                response_headers,
                set_cookie_lines,
            },
        });
        report.parsed += 1;
    }

    parsed.sort_by_key(|p| (p.ts, p.index));

    let page_landing = |pageref: Option<&str>| -> Option<UrlParts> {
        let same_page = |p: &&Parsed| p.pageref.as_deref() == pageref;
        if let Some(id) = pageref {
            if let Some(page) = har.log.pages.iter().find(|p| p.id == id) {
                if let Ok(u) = parse_url(&page.title) {
                    if !u.host.is_empty() {
                        return Some(u);
                    }
                }
            }
        }
        parsed
            .iter()
            .filter(same_page)
            .find(|p| p.is_document)
            .or_else(|| parsed.iter().find(same_page))
            .map(|p| p.tx.url.clone())
    };
    let fallback = parsed
        .iter()
        .find(|p| p.is_document)
        .or(parsed.first())
        .map(|p| p.tx.url.clone());

    let mut landings = std::collections::HashMap::new();
    let mut trace = Trace::new(user);
    for (seq, p) in parsed.iter().enumerate() {
        let landing = match &p.pageref {
            Some(r) => landings
                .entry(r.clone())
                .or_insert_with(|| page_landing(Some(r)))
                .clone(),
            None => None,
        }
        .or_else(|| fallback.clone());
        let mut tx = p.tx.clone();
        tx.seq_no = seq as u64;
        if let Some(l) = landing {
            tx.landing_page = l;
        }
        trace.transactions.push(tx);
    }
    Ok((trace, report))
}
