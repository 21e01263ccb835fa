//! Loading captured traffic into [`Trace`]s.

pub mod cookie;
pub mod har;
pub mod jsonl;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cookie::{
    ingest_js_cookies, parse_cookie_date, parse_cookie_header, parse_set_cookie, CookieRecord, SetEvent,
    SetMechanism,
};
pub use har::load_har;
pub use jsonl::{load_trace_jsonl, load_traces_jsonl, read_traces_jsonl, write_traces_jsonl};

use crate::error::Result;
use crate::model::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnError {
    #[default]
    Fail,
    Skip,
}

impl FromStr for OnError {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fail" => Ok(OnError::Fail),
            "skip" => Ok(OnError::Skip),
            other => Err(format!("unknown error policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Har,
    Jsonl,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "har" => Ok(InputFormat::Har),
            "jsonl" => Ok(InputFormat::Jsonl),
            other => Err(format!("unknown input format {other:?}")),
        }
    }
}

impl fmt::Display for InputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputFormat::Har => "har",
            InputFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub on_error: OnError,
    /// User id for formats that do not carry one (HAR). Defaults to the
    /// file stem.
    pub user_id: Option<String>,
}

/// Counts for one ingestion run. `parsed + skipped` equals the number of
/// entries or lines seen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub parsed: usize,
    pub skipped: usize,
    pub warnings: usize,
}

impl IngestReport {
    pub fn merge(&mut self, other: &IngestReport) {
        self.parsed += other.parsed;
        self.skipped += other.skipped;
        self.warnings += other.warnings;
    }
}

/// Load one input file in the given format.
pub fn load(path: &Path, format: InputFormat, opts: &IngestOptions) -> Result<(Vec<Trace>, IngestReport)> {
    match format {
        InputFormat::Har => {
            let (trace, report) = load_har(path, opts)?;
            Ok((vec![trace], report))
        }
        InputFormat::Jsonl => load_traces_jsonl(path, opts),
    }
}

/// Merge traces belonging to the same user, keeping first-seen user order.
pub fn merge_by_user(traces: Vec<Trace>) -> Vec<Trace> {
    let mut out: Vec<Trace> = Vec::new();
    for t in traces {
        match out.iter_mut().find(|o| o.user_id == t.user_id) {
            Some(existing) => {
                let offset = existing
                    .transactions
                    .last()
                    .map_or(0, |l| l.seq_no + 1);
                existing.transactions.extend(t.transactions.into_iter().map(|mut tx| {
                    tx.seq_no += offset;
                    tx
                }));
                existing.js_cookie_sets.extend(t.js_cookie_sets);
            }
            None => out.push(t),
        }
    }
    out
}
