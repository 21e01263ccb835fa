//! Line-delimited trace format.
//!
//! ```text
//! {"type":"tx","ts":1,"user":"u1","landing":"https://…","method":"GET","url":"https://…",
//!  "headers":[["name","value"]],"status":302,"resp_headers":[["Location","…"]],
//!  "post_body":"a=1","post_type":"application/x-www-form-urlencoded"}
//! {"type":"js_cookie","ts":2,"user":"u1","frame":"https://…","cookie":"k=v; Max-Age=3600"}
//! ```
//!
//! Transactions get `seq_no` = 0-based line index. `post_body` is UTF-8
//! text unless `"post_encoding":"base64"` is present.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{IngestOptions, IngestReport, OnError};
use crate::error::{Error, Result};
use crate::model::{Headers, HttpTransaction, JsCookieSet, PostBody, Timestamp, Trace};
use crate::url::parse_url;

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Tx(TxLine),
    JsCookie(JsLine),
}

#[derive(Debug, Serialize, Deserialize)]
struct TxLine {
    ts: Timestamp,
    user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    landing: Option<String>,
    #[serde(default = "default_method")]
    method: String,
    url: String,
    #[serde(default)]
    headers: Vec<(String, String)>,
    #[serde(default = "default_status")]
    status: u16,
    #[serde(default)]
    resp_headers: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    post_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    post_type: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    post_encoding: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsLine {
    ts: Timestamp,
    user: String,
    frame: String,
    cookie: String,
}

fn default_method() -> String {
    "GET".to_owned()
}

fn default_status() -> u16 {
    200
}

fn tx_from_line(line: TxLine, seq_no: u64) -> std::result::Result<HttpTransaction, String> {
    let url = parse_url(&line.url).map_err(|e| e.to_string())?;
    let landing = match &line.landing {
        Some(l) => parse_url(l).map_err(|e| format!("landing: {e}"))?,
        None => url.clone(),
    };
    if !(100..=599).contains(&line.status) {
        return Err(format!("status {} out of range", line.status));
    }
    let request_headers: Headers = line.headers.into_iter().collect();
    let response_headers: Headers = line.resp_headers.into_iter().collect();
    let referer = request_headers.get("referer").and_then(|r| parse_url(r).ok());
    let set_cookie_lines = response_headers.get_all("set-cookie").map(str::to_owned).collect();
    let post_body = match line.post_body {
        Some(body) => {
            let bytes = match line.post_encoding.as_deref() {
                Some("base64") => base64::engine::general_purpose::STANDARD
                    .decode(body.as_bytes())
                    .map_err(|e| format!("post_body: {e}"))?,
                Some(other) => return Err(format!("unknown post_encoding {other:?}")),
                None => body.into_bytes(),
            };
            Some(PostBody {
                bytes,
                content_type: line.post_type,
            })
        }
        None => None,
    };
    Ok(HttpTransaction {
        seq_no,
        timestamp: line.ts,
        user_id: line.user,
        landing_page: landing,
        method: line.method.to_ascii_uppercase(),
        url,
        request_headers,
        referer,
        post_body,
        response_status: line.status,
        response_headers,
        set_cookie_lines,
    })
}

fn user_slot<'a>(traces: &'a mut Vec<Trace>, user: &str) -> &'a mut Trace {
    match traces.iter().position(|t| t.user_id == user) {
        Some(i) => &mut traces[i],
        None => {
            traces.push(Trace::new(user));
            traces.last_mut().expect("just pushed")
        }
    }
}

/// Read traces from any buffered reader, one trace per distinct user in
/// first-seen order.
pub fn read_traces_jsonl<R: BufRead>(
    reader: R,
    origin: &Path,
    opts: &IngestOptions,
) -> Result<(Vec<Trace>, IngestReport)> {
    let mut traces = Vec::new();
    let mut report = IngestReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Line>(&line)
            .map_err(|e| e.to_string())
            .and_then(|l| match l {
                Line::Tx(tx) => tx_from_line(tx, idx as u64).map(|t| (t.user_id.clone(), Ok(t))),
                Line::JsCookie(js) => Ok((
                    js.user,
                    Err(JsCookieSet {
                        timestamp: js.ts,
                        frame_url: js.frame,
                        cookie: js.cookie,
                    }),
                )),
            });
        match parsed {
            Ok((user, item)) => {
                let trace = user_slot(&mut traces, &user);
                match item {
                    Ok(tx) => trace.transactions.push(tx),
                    Err(js) => trace.js_cookie_sets.push(js),
                }
                report.parsed += 1;
            }
            Err(msg) => match opts.on_error {
                OnError::Fail => return Err(Error::parse(origin, idx + 1, msg)),
                OnError::Skip => {
                    log::warn!("{}:{}: skipped: {msg}", origin.display(), idx + 1);
                    report.skipped += 1;
                    report.warnings += 1;
                }
            },
        }
    }
    Ok((traces, report))
}

pub fn load_traces_jsonl(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<(Vec<Trace>, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces_jsonl(BufReader::new(file), path, opts)
}

/// Load a single-user trace file. Files holding several users are merged
/// under the first user's id.
pub fn load_trace_jsonl(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<(Trace, IngestReport)> {
    let path = path.as_ref();
    let (traces, report) = load_traces_jsonl(path, opts)?;
    let mut it = traces.into_iter();
    let mut first = it.next().unwrap_or_default();
    for t in it {
        log::warn!("{}: merging user {:?} into {:?}", path.display(), t.user_id, first.user_id);
        first.transactions.extend(t.transactions);
        first.js_cookie_sets.extend(t.js_cookie_sets);
    }
    first.transactions.sort_by_key(|t| t.seq_no);
    Ok((first, report))
}

fn tx_to_line(tx: &HttpTransaction) -> TxLine {
    let (post_body, post_type, post_encoding) = match &tx.post_body {
        Some(body) => match std::str::from_utf8(&body.bytes) {
            Ok(text) => (Some(text.to_owned()), body.content_type.clone(), None),
            Err(_) => (
                Some(base64::engine::general_purpose::STANDARD.encode(&body.bytes)),
                body.content_type.clone(),
                Some("base64".to_owned()),
            ),
        },
        None => (None, None, None),
    };
    TxLine {
        ts: tx.timestamp,
        user: tx.user_id.clone(),
        landing: Some(tx.landing_page.raw.clone()),
        method: tx.method.clone(),
        url: tx.url.raw.clone(),
        headers: tx.request_headers.0.clone(),
        status: tx.response_status,
        resp_headers: tx.response_headers.0.clone(),
        post_body,
        post_type,
        post_encoding,
    }
}

/// Write traces in file order: each user's transactions, then that user's
/// script cookie observations. Re-reading yields identical traces when
/// every transaction's `seq_no` equals its output line index.
pub fn write_traces_jsonl<W: Write>(traces: &[Trace], mut out: W) -> std::io::Result<()> {
    for trace in traces {
        for tx in &trace.transactions {
            serde_json::to_writer(&mut out, &Line::Tx(tx_to_line(tx)))?;
            out.write_all(b"\n")?;
        }
        for js in &trace.js_cookie_sets {
            let line = Line::JsCookie(JsLine {
                ts: js.timestamp,
                user: trace.user_id.clone(),
                frame: js.frame_url.clone(),
                cookie: js.cookie.clone(),
            });
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Assign `seq_no` values matching the line layout of
/// [`write_traces_jsonl`].
pub fn assign_line_seq_nos(traces: &mut [Trace]) {
    let mut line = 0u64;
    for trace in traces {
        for tx in &mut trace.transactions {
            tx.seq_no = line;
            line += 1;
        }
        line += trace.js_cookie_sets.len() as u64;
    }
}
