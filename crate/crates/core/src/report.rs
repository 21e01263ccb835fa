//! Summary statistics over detected events.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entity::EntityResolver;
use crate::error::{Error, Result};
use crate::model::{DetectionMethod, Location, Relation, SyncEvent, Trace};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub events: usize,
    pub unique_values: usize,
    pub unique_senders: usize,
    pub unique_receivers: usize,
    /// Distinct landing sites (registrable domains) with at least one event.
    pub first_parties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationStat {
    pub location: Location,
    pub count: usize,
    /// Omitted when there are no events.
    pub percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodStat {
    pub method: DetectionMethod,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationStat {
    pub relation: Relation,
    pub events: usize,
    /// Landing sites with at least one event of this relation.
    pub websites: usize,
    /// Share of all landing sites in the traces.
    pub websites_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStat {
    pub sender: String,
    pub receiver: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub totals: Totals,
    /// Landing sites in the traces, with or without events.
    pub websites: usize,
    pub locations: Vec<LocationStat>,
    pub methods: Vec<MethodStat>,
    pub relations: Vec<RelationStat>,
    pub top_pairs: Vec<PairStat>,
}

const METHODS: [DetectionMethod; 3] = [
    DetectionMethod::SharedIdHeuristic,
    DetectionMethod::TwoPassIdLooking,
    DetectionMethod::KnownPairList,
];

const RELATIONS: [Relation; 2] = [Relation::FirstPartyLeak, Relation::ThirdPartySync];

fn percent(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| part as f64 * 100.0 / whole as f64)
}

/// Fold events into a report. Landing sites are registrable domains under
/// `resolver`'s suffix rules. Every event must reference a transaction in
/// `traces`.
pub fn aggregate(events: &[SyncEvent], traces: &[Trace], resolver: &EntityResolver, top_k: usize) -> Result<Report> {
    let by_user: HashMap<&str, Vec<&Trace>> = traces.iter().fold(HashMap::new(), |mut m, t| {
        m.entry(t.user_id.as_str()).or_default().push(t);
        m
    });
    let site = |host: &str| resolver.registrable_or_host(host);

    let all_sites: BTreeSet<String> = traces
        .iter()
        .flat_map(|t| t.transactions.iter())
        .map(|tx| site(&tx.landing_page.host))
        .collect();

    let mut values = BTreeSet::new();
    let mut senders = BTreeSet::new();
    let mut receivers = BTreeSet::new();
    let mut event_sites = BTreeSet::new();
    let mut relation_sites: BTreeMap<Relation, BTreeSet<String>> = BTreeMap::new();
    let mut relation_events: BTreeMap<Relation, usize> = BTreeMap::new();
    let mut locations: BTreeMap<Location, usize> = BTreeMap::new();
    let mut methods: BTreeMap<DetectionMethod, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(String, String), usize> = BTreeMap::new();

    for e in events {
        let tx = by_user
            .get(e.user_id.as_str())
            .and_then(|ts| ts.iter().find_map(|t| t.transaction(e.seq_no)))
            .ok_or_else(|| Error::DanglingEvent {
                user: e.user_id.clone(),
                seq: e.seq_no,
            })?;
        let landing = site(&tx.landing_page.host);
        if !e.shared_value.is_empty() {
            values.insert(e.shared_value.as_str());
        }
        senders.insert(&e.sender);
        receivers.insert(&e.receiver);
        event_sites.insert(landing.clone());
        relation_sites.entry(e.relation).or_default().insert(landing);
        *relation_events.entry(e.relation).or_default() += 1;
        *locations.entry(e.location).or_default() += 1;
        *methods.entry(e.method).or_default() += 1;
        *pairs.entry((e.sender.name.clone(), e.receiver.name.clone())).or_default() += 1;
    }

    let total = events.len();
    let mut top: Vec<PairStat> = pairs
        .into_iter()
        .map(|((sender, receiver), count)| PairStat { sender, receiver, count })
        .collect();
    top.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| (&a.sender, &a.receiver).cmp(&(&b.sender, &b.receiver))));
    top.truncate(top_k);

    Ok(Report {
        totals: Totals {
            events: total,
            unique_values: values.len(),
            unique_senders: senders.len(),
            unique_receivers: receivers.len(),
            first_parties: event_sites.len(),
        },
        websites: all_sites.len(),
        locations: Location::ALL
            .iter()
            .map(|&location| {
                let count = locations.get(&location).copied().unwrap_or(0);
                LocationStat {
                    location,
                    count,
                    percent: percent(count, total),
                }
            })
            .collect(),
        methods: METHODS
            .iter()
            .map(|&method| MethodStat {
                method,
                count: methods.get(&method).copied().unwrap_or(0),
            })
            .collect(),
        relations: RELATIONS
            .iter()
            .map(|&relation| {
                let websites = relation_sites.get(&relation).map_or(0, BTreeSet::len);
                RelationStat {
                    relation,
                    events: relation_events.get(&relation).copied().unwrap_or(0),
                    websites,
                    websites_percent: percent(websites, all_sites.len()),
                }
            })
            .collect(),
        top_pairs: top,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

fn pct(p: Option<f64>) -> String {
    p.map(|v| format!("{v:.3}")).unwrap_or_default()
}

pub fn render(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Text => render_text(report),
    }
}

/// The location table first, then the method, relation, pair and total
/// tables, separated by blank lines.
fn render_csv(r: &Report) -> String {
    let mut s = String::from("location,count,percent\n");
    for l in &r.locations {
        let _ = writeln!(s, "{},{},{}", l.location, l.count, pct(l.percent));
    }
    s.push_str("\nmethod,count\n");
    for m in &r.methods {
        let _ = writeln!(s, "{},{}", m.method.as_str(), m.count);
    }
    s.push_str("\nrelation,events,websites,websites_percent\n");
    for rel in &r.relations {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            rel.relation.as_str(),
            rel.events,
            rel.websites,
            pct(rel.websites_percent)
        );
    }
    s.push_str("\nsender,receiver,count\n");
    for p in &r.top_pairs {
        let _ = writeln!(s, "{},{},{}", csv_field(&p.sender), csv_field(&p.receiver), p.count);
    }
    let t = &r.totals;
    s.push_str("\nmetric,value\n");
    for (k, v) in [
        ("events", t.events),
        ("unique_values", t.unique_values),
        ("unique_senders", t.unique_senders),
        ("unique_receivers", t.unique_receivers),
        ("first_parties", t.first_parties),
        ("websites", r.websites),
    ] {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_owned()
    }
}

fn render_text(r: &Report) -> String {
    let t = &r.totals;
    let mut s = String::new();
    let _ = writeln!(s, "events:            {}", t.events);
    let _ = writeln!(s, "unique values:     {}", t.unique_values);
    let _ = writeln!(s, "unique senders:    {}", t.unique_senders);
    let _ = writeln!(s, "unique receivers:  {}", t.unique_receivers);
    let _ = writeln!(s, "first parties:     {} of {} websites", t.first_parties, r.websites);
    s.push_str("\nlocations\n");
    for l in &r.locations {
        match l.percent {
            Some(p) => {
                let _ = writeln!(s, "  {:<20} {:>8}  {p:>8.3}%", l.location.as_str(), l.count);
            }
            None => {
                let _ = writeln!(s, "  {:<20} {:>8}", l.location.as_str(), l.count);
            }
        }
    }
    s.push_str("\nmethods\n");
    for m in &r.methods {
        let _ = writeln!(s, "  {:<20} {:>8}", m.method.as_str(), m.count);
    }
    s.push_str("\nrelations\n");
    for rel in &r.relations {
        let share = rel.websites_percent.map(|p| format!(" ({p:.3}% of websites)")).unwrap_or_default();
        let _ = writeln!(
            s,
            "  {:<20} {:>8} events, {} websites{share}",
            rel.relation.as_str(),
            rel.events,
            rel.websites
        );
    }
    if !r.top_pairs.is_empty() {
        s.push_str("\ntop sender -> receiver pairs\n");
        for p in &r.top_pairs {
            let _ = writeln!(s, "  {:>8}  {} -> {}", p.count, p.sender, p.receiver);
        }
    }
    s
}
