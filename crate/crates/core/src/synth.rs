//! Synthetic traces with planted syncs and filter-targeted noise.
//!
//! Generation is a deterministic function of the parameters. The random
//! source is ChaCha8 seeded with `seed_from_u64(seed)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Duration, UNIX_EPOCH};

use rand::distr::Alphanumeric;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::EventRecord;
use crate::error::{Error, Result};
use crate::identifiers::ratcliff_obershelp;
use crate::ingest::jsonl::assign_line_seq_nos;
use crate::model::{
    DetectionMethod, Entity, Headers, HttpTransaction, JsCookieSet, Location, PostBody, Relation, SyncEvent,
    Timestamp, Trace,
};
use crate::profile::{Profile, SessionPolicy};
use crate::url::parse_url;

const T0: Timestamp = 1_700_000_000_000;
const YEAR_SECS: i64 = 365 * 24 * 3600;

/// Noise values, each of which one filter must remove.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Values at or below the minimum length.
    pub short_values: usize,
    /// Epoch-millisecond values (keyword filter patterns).
    pub timestamp_values: usize,
    /// Keys whose value holds two identifier-shaped tokens.
    pub multi_value_keys: usize,
    /// Keys set to two different values.
    pub dynamic_keys: usize,
    /// Identifier-shaped cookies without expiry.
    pub session_cookies: usize,
    /// Values set identically for every user.
    pub cross_user_values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_users: usize,
    /// Transactions per user.
    pub n_transactions: usize,
    pub n_trackers: usize,
    pub n_publishers: usize,
    /// Planted syncs over all users.
    pub plant_syncs: usize,
    /// Relative weights of the locations planted syncs use.
    pub plant_locations: Vec<(Location, f64)>,
    pub id_length: usize,
    pub noise: NoiseParams,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            seed: 1,
            n_users: 1,
            n_transactions: 100,
            n_trackers: 8,
            n_publishers: 4,
            plant_syncs: 0,
            plant_locations: Location::ALL.iter().map(|l| (*l, 1.0)).collect(),
            id_length: 16,
            noise: NoiseParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlantedIdentifier {
    pub user: String,
    /// Cookie owner domain.
    pub owner: String,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub events: Vec<SyncEvent>,
    pub identifiers: Vec<PlantedIdentifier>,
}

/// Precision and recall of detected events against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Events match on (user, seq_no, value, location); duplicates count once.
pub fn score(detected: &[SyncEvent], truth: &[SyncEvent]) -> Score {
    let key = |e: &SyncEvent| (e.user_id.clone(), e.seq_no, e.shared_value.clone(), e.location);
    let d: HashSet<_> = detected.iter().map(key).collect();
    let t: HashSet<_> = truth.iter().map(key).collect();
    let tp = d.intersection(&t).count();
    let fp = d.len() - tp;
    let fn_ = t.len() - tp;
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Score {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
    }
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::InfeasibleParams(msg.into())
}

/// Split `n` over the weights by largest remainder.
fn apportion(n: usize, weights: &[(Location, f64)]) -> Vec<Location> {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let shares: Vec<f64> = weights.iter().map(|(_, w)| w / total * n as f64).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(n - assigned) {
        counts[i] += 1;
    }
    weights
        .iter()
        .zip(counts)
        .flat_map(|((loc, _), c)| std::iter::repeat_n(*loc, c))
        .collect()
}

fn validate(params: &SynthParams, profile: &Profile) -> Result<()> {
    let f = &profile.filter;
    if params.id_length <= f.min_len || f.max_len.is_some_and(|m| params.id_length > m) {
        return Err(infeasible(format!(
            "id_length {} does not pass the profile length bounds",
            params.id_length
        )));
    }
    if params.n_transactions > 0 && params.n_publishers == 0 {
        return Err(infeasible("traffic needs at least one publisher"));
    }
    if params.plant_syncs > 0 {
        if params.n_trackers == 0 {
            return Err(infeasible("planted syncs need at least one tracker"));
        }
        let weights: Vec<&(Location, f64)> = params.plant_locations.iter().filter(|(_, w)| *w > 0.0).collect();
        if weights.is_empty() || params.plant_locations.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(infeasible("plant_locations needs a positive weight"));
        }
        if let Some((loc, _)) = weights.iter().find(|(l, _)| !profile.locations.contains(*l)) {
            return Err(infeasible(format!("profile does not scan {loc}")));
        }
        let per_user = params.plant_syncs.div_ceil(params.n_users.max(1));
        if params.n_users == 0 || per_user + 2 > params.n_transactions {
            return Err(infeasible(format!(
                "{} planted syncs do not fit in {} transactions per user",
                params.plant_syncs, params.n_transactions
            )));
        }
    }
    let n = &params.noise;
    let any_noise = n.short_values + n.timestamp_values + n.multi_value_keys + n.dynamic_keys + n.session_cookies
        + n.cross_user_values
        > 0;
    if any_noise && params.n_transactions < 2 {
        return Err(infeasible("noise needs at least two transactions per user"));
    }
    let need = |count: usize, ok: bool, what: &str| {
        if count > 0 && !ok {
            Err(infeasible(format!("profile cannot remove {what} noise")))
        } else {
            Ok(())
        }
    };
    need(n.short_values, f.min_len > 0, "short")?;
    need(n.timestamp_values, f.keyword_blocklist.is_some(), "timestamp")?;
    need(
        n.multi_value_keys,
        f.drop_multi_value_keys && !f.delimiters.is_empty(),
        "multi-value",
    )?;
    need(n.dynamic_keys, f.drop_dynamic_keys, "dynamic-value")?;
    need(n.session_cookies, f.session_policy != SessionPolicy::Keep, "session")?;
    need(n.cross_user_values, f.cross_user_dedup && params.n_users >= 2, "cross-user")?;
    Ok(())
}

/// Random identifier-shaped values checked against the profile filters.
struct ValuePool<'a> {
    profile: &'a Profile,
    used: HashSet<String>,
}

impl ValuePool<'_> {
    fn alnum(rng: &mut ChaCha8Rng, len: usize) -> String {
        rng.sample_iter(Alphanumeric).take(len).map(char::from).collect()
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, len: usize) -> String {
        loop {
            let v = Self::alnum(rng, len);
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }

    /// A value that survives every filter and is not too similar to any of
    /// `survivors`.
    fn identifier(&mut self, rng: &mut ChaCha8Rng, len: usize, survivors: &[String]) -> String {
        let f = &self.profile.filter;
        loop {
            let v = Self::alnum(rng, len);
            if self.used.contains(&v) {
                continue;
            }
            if f.keyword_blocklist.as_ref().is_some_and(|b| b.blocks(None, &v)) {
                continue;
            }
            if let Some(t) = f.similarity_threshold {
                if survivors.iter().any(|s| ratcliff_obershelp(&v, s) > t) {
                    continue;
                }
            }
            self.used.insert(v.clone());
            return v;
        }
    }
}

#[derive(Clone)]
struct Draft {
    method: &'static str,
    url: String,
    landing: String,
    request_headers: Vec<(String, String)>,
    status: u16,
    response_headers: Vec<(String, String)>,
    post_body: Option<(String, String)>,
    /// Index into the user's script cookie list set by this page.
    js: Vec<JsDraft>,
}

#[derive(Clone)]
struct JsDraft {
    frame: String,
    cookie: String,
}

struct Owned {
    owner_host: String,
    entity: String,
    key: String,
    value: String,
    set_at: usize,
}

struct Plant {
    location: Location,
}

fn h(name: &str, value: impl Into<String>) -> (String, String) {
    (name.to_owned(), value.into())
}

fn tracker(i: usize) -> String {
    format!("tracker{i}.com")
}

fn publisher(i: usize) -> String {
    format!("publisher{i}.com")
}

fn http_date(ms: Timestamp) -> String {
    httpdate::fmt_http_date(UNIX_EPOCH + Duration::from_millis(ms as u64))
}

/// Generate traces under the bundled `synth` profile.
pub fn generate(params: &SynthParams) -> Result<(Vec<Trace>, GroundTruth)> {
    let profile = Profile::preset("synth").expect("bundled preset");
    generate_for_profile(params, &profile)
}

/// Generate traces whose planted identifiers survive `profile` and whose
/// noise it removes.
pub fn generate_for_profile(params: &SynthParams, profile: &Profile) -> Result<(Vec<Trace>, GroundTruth)> {
    validate(params, profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pool = ValuePool {
        profile,
        used: HashSet::new(),
    };
    let id_len = params.id_length;

    let mut cross_user: Vec<String> = Vec::new();
    for _ in 0..params.noise.cross_user_values {
        let v = pool.identifier(&mut rng, id_len, &cross_user);
        cross_user.push(v);
    }

    let mut locations = if params.plant_syncs > 0 {
        apportion(params.plant_syncs, &params.plant_locations)
    } else {
        Vec::new()
    };
    locations.shuffle(&mut rng);
    let mut plants_by_user: Vec<Vec<Plant>> = (0..params.n_users).map(|_| Vec::new()).collect();
    for (i, location) in locations.into_iter().enumerate() {
        plants_by_user[i % params.n_users].push(Plant { location });
    }

    let mut traces = Vec::new();
    let mut planted: Vec<(usize, usize, SyncEvent)> = Vec::new();
    let mut identifiers = Vec::new();
    for (u, plants) in plants_by_user.into_iter().enumerate() {
        let user = format!("user{u}");
        let (drafts, owned, user_plants) = user_traffic(&mut rng, &mut pool, params, &cross_user, &user, plants)?;
        let mut trace = Trace::new(&user);
        let mut ts = T0 + u as i64 * 3_600_000;
        for d in &drafts {
            ts += rng.random_range(20..400);
            trace.transactions.push(build_tx(d, &user, ts)?);
            for js in &d.js {
                trace.js_cookie_sets.push(JsCookieSet {
                    timestamp: ts + 5,
                    frame_url: js.frame.clone(),
                    cookie: js.cookie.clone(),
                });
            }
        }
        for o in &owned {
            identifiers.push(PlantedIdentifier {
                user: user.clone(),
                owner: o.owner_host.clone(),
                key: o.key.clone(),
                value: o.value.clone(),
            });
        }
        for (idx, ev) in user_plants {
            planted.push((u, idx, ev));
        }
        traces.push(trace);
    }

    assign_line_seq_nos(&mut traces);
    let events = planted
        .into_iter()
        .map(|(u, idx, mut ev)| {
            let tx = &traces[u].transactions[idx];
            ev.seq_no = tx.seq_no;
            ev.timestamp = tx.timestamp;
            ev
        })
        .collect::<Vec<_>>();
    let mut events = events;
    crate::model::normalize_events(&mut events);
    Ok((traces, GroundTruth { events, identifiers }))
}

fn build_tx(d: &Draft, user: &str, ts: Timestamp) -> Result<HttpTransaction> {
    let request_headers: Headers = d.request_headers.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    let response_headers: Headers = d.response_headers.iter().map(|(n, v)| (n.as_str(), v.clone())).collect();
    Ok(HttpTransaction {
        seq_no: 0,
        timestamp: ts,
        user_id: user.to_owned(),
        landing_page: parse_url(&d.landing)?,
        method: d.method.to_owned(),
        url: parse_url(&d.url)?,
        referer: request_headers.get("referer").map(parse_url).transpose()?,
        request_headers,
        post_body: d.post_body.as_ref().map(|(body, ty)| PostBody {
            bytes: body.clone().into_bytes(),
            content_type: Some(ty.clone()),
        }),
        response_status: d.status,
        set_cookie_lines: response_headers.get_all("set-cookie").map(str::to_owned).collect(),
        response_headers,
    })
}

type UserTraffic = (Vec<Draft>, Vec<Owned>, Vec<(usize, SyncEvent)>);

fn user_traffic(
    rng: &mut ChaCha8Rng,
    pool: &mut ValuePool,
    params: &SynthParams,
    cross_user: &[String],
    user: &str,
    plants: Vec<Plant>,
) -> Result<UserTraffic> {
    let id_len = params.id_length;
    let base_count = params.n_transactions - plants.len();
    let mut drafts: Vec<Draft> = Vec::with_capacity(params.n_transactions);
    let mut owned: Vec<Owned> = Vec::new();
    // Values that reach the similarity stage for this user.
    let mut survivors: Vec<String> = cross_user.to_vec();
    let mut tracker_ids: HashMap<usize, String> = HashMap::new();
    let mut publisher_seen: HashSet<usize> = HashSet::new();
    let mut pid_of: HashMap<usize, String> = HashMap::new();
    let mut third_party: Vec<usize> = Vec::new();

    let first_pub = rng.random_range(0..params.n_publishers.max(1));
    let mut noise_leaks: Vec<String> = Vec::new();

    while drafts.len() < base_count {
        let p = if drafts.is_empty() {
            first_pub
        } else {
            rng.random_range(0..params.n_publishers)
        };
        let host = format!("www.{}", publisher(p));
        let landing = format!("https://{host}/article/{}", rng.random_range(1000..99999));
        let mut doc = Draft {
            method: "GET",
            url: landing.clone(),
            landing: landing.clone(),
            request_headers: vec![h("Accept", "text/html"), h("User-Agent", "Mozilla/5.0")],
            status: 200,
            response_headers: vec![h("Content-Type", "text/html; charset=utf-8")],
            post_body: None,
            js: Vec::new(),
        };
        if publisher_seen.insert(p) {
            let pid = pool.identifier(rng, id_len, &survivors);
            survivors.push(pid.clone());
            doc.response_headers
                .push(h("Set-Cookie", format!("_pid={pid}; Max-Age={YEAR_SECS}; Path=/")));
            owned.push(Owned {
                owner_host: host.clone(),
                entity: publisher(p),
                key: "_pid".into(),
                value: pid.clone(),
                set_at: drafts.len(),
            });
            pid_of.insert(p, pid);
            let jsid = pool.identifier(rng, id_len, &survivors);
            survivors.push(jsid.clone());
            doc.js.push(JsDraft {
                frame: landing.clone(),
                cookie: format!("_jsid={jsid}; Max-Age={}; Path=/", 2 * YEAR_SECS),
            });
            owned.push(Owned {
                owner_host: publisher(p),
                entity: publisher(p),
                key: "_jsid".into(),
                value: jsid,
                set_at: drafts.len(),
            });
        } else {
            doc.request_headers.push(h("Cookie", format!("_pid={}", pid_of[&p])));
        }
        if drafts.is_empty() {
            noise_leaks = first_party_noise(rng, pool, params, cross_user, &mut doc);
        }
        drafts.push(doc);

        if drafts.len() == 1 && base_count >= 2 {
            // Second value of every dynamic key, from the same host.
            let mut api = Draft {
                method: "GET",
                url: format!("https://{host}/api/session"),
                landing: landing.clone(),
                request_headers: vec![h("Referer", landing.clone())],
                status: 200,
                response_headers: vec![h("Content-Type", "application/json")],
                post_body: None,
                js: Vec::new(),
            };
            for i in 0..params.noise.dynamic_keys {
                let v = pool.fresh(rng, id_len);
                api.response_headers
                    .push(h("Set-Cookie", format!("dk{i}={v}; Max-Age={YEAR_SECS}")));
                noise_leaks.push(v);
            }
            drafts.push(api);
        }

        if params.n_trackers == 0 {
            continue;
        }
        for _ in 0..rng.random_range(3..9) {
            if drafts.len() >= base_count {
                break;
            }
            let t = rng.random_range(0..params.n_trackers);
            let mut req = vec![h("Referer", landing.clone()), h("Sec-Fetch-Dest", "image")];
            let mut resp = vec![
                h("Content-Type", "image/gif"),
                h("X-Request-Id", ValuePool::alnum(rng, 20)),
            ];
            match tracker_ids.get(&t) {
                Some(id) => req.push(h("Cookie", format!("uid={id}"))),
                None => {
                    let id = pool.identifier(rng, id_len, &survivors);
                    survivors.push(id.clone());
                    let expires = http_date(T0 + 400 * 24 * 3_600_000);
                    resp.push(h(
                        "Set-Cookie",
                        format!("uid={id}; Domain=.{}; Expires={expires}; Path=/; SameSite=None; Secure", tracker(t)),
                    ));
                    owned.push(Owned {
                        owner_host: tracker(t),
                        entity: tracker(t),
                        key: "uid".into(),
                        value: id.clone(),
                        set_at: drafts.len(),
                    });
                    tracker_ids.insert(t, id);
                }
            }
            third_party.push(drafts.len());
            drafts.push(Draft {
                method: "GET",
                url: format!(
                    "https://px.{}/p.gif?cb={}&v={}",
                    tracker(t),
                    rng.random_range(10_000_000..99_999_999),
                    ValuePool::alnum(rng, 4)
                ),
                landing: landing.clone(),
                request_headers: req,
                status: 200,
                response_headers: resp,
                post_body: None,
                js: Vec::new(),
            });
        }
    }

    // Leak every noise value into some third-party request.
    if !third_party.is_empty() {
        for v in noise_leaks {
            let i = *third_party.choose(rng).expect("nonempty");
            let d = &mut drafts[i];
            d.url.push_str(&format!("&n{}={}", rng.random_range(0..1000), v));
        }
    }

    // Planted syncs: insert after the owner's cookie is set.
    let mut inserts: Vec<(usize, Draft, SyncEvent)> = Vec::new();
    for plant in plants {
        let o = owned.choose(rng).expect("the first page sets identifiers");
        let receivers: Vec<usize> = (0..params.n_trackers).filter(|r| tracker(*r) != o.entity).collect();
        let r = *receivers
            .choose(rng)
            .ok_or_else(|| infeasible("no tracker differs from the identifier owner"))?;
        let pos = rng.random_range(o.set_at + 1..=drafts.len());
        let page = drafts[pos - 1].landing.clone();
        let draft = planted_draft(rng, plant.location, &o.value, &o.owner_host, r, &page, params.n_trackers);
        let landing_entity = page
            .split('/')
            .nth(2)
            .and_then(|host| host.strip_prefix("www."))
            .unwrap_or_default()
            .to_owned();
        let ev = SyncEvent {
            user_id: user.to_owned(),
            seq_no: 0,
            timestamp: 0,
            shared_value: o.value.clone(),
            sender: Entity::etld1(&o.entity),
            receiver: Entity::etld1(tracker(r)),
            location: plant.location,
            method: DetectionMethod::SharedIdHeuristic,
            relation: if landing_entity == o.entity {
                Relation::FirstPartyLeak
            } else {
                Relation::ThirdPartySync
            },
            matched_key: Some(o.key.clone()),
        };
        inserts.push((pos, draft, ev));
    }
    // Stable by position, so equal positions keep draw order.
    inserts.sort_by_key(|(pos, _, _)| *pos);
    let mut out: Vec<Draft> = Vec::with_capacity(drafts.len() + inserts.len());
    let mut events = Vec::new();
    let mut next = inserts.into_iter().peekable();
    for (i, d) in drafts.into_iter().enumerate() {
        while next.peek().is_some_and(|(pos, _, _)| *pos == i) {
            let (_, draft, ev) = next.next().expect("peeked");
            events.push((out.len(), ev));
            out.push(draft);
        }
        out.push(d);
    }
    for (_, draft, ev) in next {
        events.push((out.len(), ev));
        out.push(draft);
    }
    Ok((out, owned, events))
}

/// Noise cookies on the first page; returns the values to leak.
fn first_party_noise(
    rng: &mut ChaCha8Rng,
    pool: &mut ValuePool,
    params: &SynthParams,
    cross_user: &[String],
    doc: &mut Draft,
) -> Vec<String> {
    let f = &pool.profile.filter;
    let id_len = params.id_length;
    let n = &params.noise;
    let mut leaks = Vec::new();
    let set = |doc: &mut Draft, line: String| doc.response_headers.push(h("Set-Cookie", line));
    let persistent = format!("Max-Age={YEAR_SECS}");

    let short_max = f.min_len.max(1);
    for i in 0..n.short_values {
        let len = rng.random_range(short_max.min(3)..=short_max);
        let v = pool.fresh(rng, len);
        set(doc, format!("s{i}={v}; {persistent}"));
        leaks.push(v);
    }
    for i in 0..n.timestamp_values {
        let v = format!("{}", T0 + rng.random_range(0..10_000_000_000i64));
        pool.used.insert(v.clone());
        set(doc, format!("ts{i}={v}; {persistent}"));
        leaks.push(v);
    }
    let delim = f.delimiters.first().copied().unwrap_or('&');
    for i in 0..n.multi_value_keys {
        let a = pool.fresh(rng, id_len);
        let b = pool.fresh(rng, id_len);
        set(doc, format!("mv{i}={a}{delim}{b}; {persistent}"));
        leaks.push(a);
    }
    for i in 0..n.dynamic_keys {
        let v = pool.fresh(rng, id_len);
        set(doc, format!("dk{i}={v}; {persistent}"));
        leaks.push(v);
    }
    for i in 0..n.session_cookies {
        let v = pool.fresh(rng, id_len);
        set(doc, format!("ss{i}={v}; Path=/"));
        leaks.push(v);
    }
    for (i, v) in cross_user.iter().enumerate() {
        set(doc, format!("cu{i}={v}; {persistent}"));
        leaks.push(v.clone());
    }
    leaks
}

fn planted_draft(
    rng: &mut ChaCha8Rng,
    location: Location,
    value: &str,
    owner_host: &str,
    receiver: usize,
    page: &str,
    n_trackers: usize,
) -> Draft {
    let host = format!("sync.{}", tracker(receiver));
    let mut d = Draft {
        method: "GET",
        url: format!("https://{host}/px.gif"),
        landing: page.to_owned(),
        request_headers: vec![h("Referer", page)],
        status: 200,
        response_headers: vec![h("Content-Type", "image/gif")],
        post_body: None,
        js: Vec::new(),
    };
    match location {
        Location::QueryParam => {
            d.url = format!("https://{host}/match?partner={}&puid={value}", rng.random_range(0..1000));
        }
        Location::Path => d.url = format!("https://{host}/match/{value}/px.gif"),
        Location::RefererUrl => d.request_headers = vec![h("Referer", format!("https://{owner_host}/frame?uid={value}"))],
        Location::RedirectLocation => {
            let next = rng.random_range(0..n_trackers);
            d.url = format!("https://{host}/redir");
            d.status = 302;
            d.response_headers = vec![h("Location", format!("https://cm.{}/match?uid={value}", tracker(next)))];
        }
        Location::NonstandardHeader => d.request_headers.push(h("X-Partner-Uid", value)),
        Location::PostBody => {
            d.method = "POST";
            d.url = format!("https://{host}/collect");
            d.post_body = Some((
                format!("uid={value}&ev=pageview"),
                "application/x-www-form-urlencoded".to_owned(),
            ));
        }
    }
    d
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TruthLine {
    Event(EventRecord),
    Identifier(PlantedIdentifier),
}

pub fn write_truth_jsonl<W: Write>(truth: &GroundTruth, mut out: W) -> std::io::Result<()> {
    for id in &truth.identifiers {
        serde_json::to_writer(&mut out, &TruthLine::Identifier(id.clone()))?;
        out.write_all(b"\n")?;
    }
    for e in &truth.events {
        serde_json::to_writer(&mut out, &TruthLine::Event(EventRecord::from(e)))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_truth_jsonl<R: BufRead>(reader: R, origin: &Path) -> Result<GroundTruth> {
    let mut truth = GroundTruth::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<TruthLine>(&line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))? {
            TruthLine::Identifier(id) => truth.identifiers.push(id),
            TruthLine::Event(rec) => truth
                .events
                .push(SyncEvent::try_from(rec).map_err(|e| Error::parse(origin, i + 1, e))?),
        }
    }
    Ok(truth)
}

/// Planted events per location, for summaries.
pub fn location_counts(events: &[SyncEvent]) -> BTreeMap<Location, usize> {
    let mut m = BTreeMap::new();
    for e in events {
        *m.entry(e.location).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_counts() {
        let all: Vec<(Location, f64)> = Location::ALL.iter().map(|l| (*l, 1.0)).collect();
        let got = apportion(50, &all);
        assert_eq!(got.len(), 50);
        let counts = location_counts(
            &got.iter()
                .map(|l| SyncEvent {
                    user_id: String::new(),
                    seq_no: 0,
                    timestamp: 0,
                    shared_value: String::new(),
                    sender: Entity::etld1("a.com"),
                    receiver: Entity::etld1("b.com"),
                    location: *l,
                    method: DetectionMethod::SharedIdHeuristic,
                    relation: Relation::ThirdPartySync,
                    matched_key: None,
                })
                .collect::<Vec<_>>(),
        );
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), [9, 9, 8, 8, 8, 8]);
    }

    #[test]
    fn score_conventions() {
        let ev = |seq: u64| SyncEvent {
            user_id: "u".into(),
            seq_no: seq,
            timestamp: 0,
            shared_value: "v".into(),
            sender: Entity::etld1("a.com"),
            receiver: Entity::etld1("b.com"),
            location: Location::QueryParam,
            method: DetectionMethod::SharedIdHeuristic,
            relation: Relation::ThirdPartySync,
            matched_key: None,
        };
        let truth: Vec<SyncEvent> = (0..4).map(ev).collect();
        let s = score(&truth, &truth);
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
        let mut more = truth.clone();
        more.push(ev(9));
        let s = score(&more, &truth);
        assert_eq!((s.precision, s.recall), (0.8, 1.0));
        let s = score(&[], &truth);
        assert_eq!((s.precision, s.recall), (1.0, 0.0));
    }

    #[test]
    fn deterministic() {
        let p = SynthParams {
            plant_syncs: 6,
            noise: NoiseParams {
                short_values: 1,
                timestamp_values: 1,
                multi_value_keys: 1,
                dynamic_keys: 1,
                session_cookies: 1,
                cross_user_values: 1,
            },
            n_users: 2,
            ..SynthParams::default()
        };
        let a = generate(&p).unwrap();
        let b = generate(&p).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.0[0].transactions.len(), 100);
        assert_eq!(a.1.events.len(), 6);
    }

    #[test]
    fn infeasible_params() {
        let short = SynthParams {
            id_length: 8,
            ..SynthParams::default()
        };
        assert!(matches!(generate(&short), Err(Error::InfeasibleParams(_))));
        let crowded = SynthParams {
            n_transactions: 5,
            plant_syncs: 10,
            ..SynthParams::default()
        };
        assert!(matches!(generate(&crowded), Err(Error::InfeasibleParams(_))));
        let lonely = SynthParams {
            noise: NoiseParams {
                cross_user_values: 1,
                ..Default::default()
            },
            ..SynthParams::default()
        };
        assert!(matches!(generate(&lonely), Err(Error::InfeasibleParams(_))));
    }
}
