//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::distr::Alphanumeric;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use syncscope::detect::{detect, detect_shared, detect_two_pass, scan_id_looking, IdSharingEvent, Occurrence};
use syncscope::entity::EntityResolver;
use syncscope::identifiers::{
    extract_identifiers, filter_charset, filter_keywords, filter_length, filter_similarity, ratcliff_obershelp,
    split_on_delimiters, Identifier, IdentifierSet, KeywordBlocklist,
};
use syncscope::ingest::{load_har, read_traces_jsonl, write_traces_jsonl, IngestOptions, OnError};
use syncscope::model::{
    normalize_events, DetectionMethod, EntityMode, Headers, HttpTransaction, Location, Relation, SyncEvent, Trace,
};
use syncscope::party::PartyStrategy;
use syncscope::profile::{FilterConfig, Profile, ScanLocationSet, SessionPolicy, TwoPassCountMode};
use syncscope::psl::SuffixRules;
use syncscope::report::{aggregate, render, Report, ReportFormat};
use syncscope::synth::{self, NoiseParams, SynthParams};
use syncscope::url::parse_url;

type Outcome = Result<String, String>;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn resolver() -> EntityResolver {
    EntityResolver::bundled(EntityMode::Etld1)
}

/// Run `f(i)` for `i in 0..n` on a few worker threads, returning the first
/// error by index.
fn par_for<F>(n: usize, f: F) -> Result<(), String>
where
    F: Fn(usize) -> Result<(), String> + Sync,
{
    let next = AtomicUsize::new(0);
    let errors = Mutex::new(BTreeMap::new());
    let workers = std::thread::available_parallelism().map_or(4, |p| p.get()).min(16);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                if let Err(e) = f(i) {
                    errors.lock().unwrap().insert(i, e);
                }
            });
        }
    });
    match errors.into_inner().unwrap().into_iter().next() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

// 1 ------------------------------------------------------------------------

fn walkthrough_fixture() -> Outcome {
    let start = Instant::now();
    let opts = IngestOptions {
        on_error: OnError::Fail,
        user_id: None,
    };
    let (traces, _) = syncscope::ingest::load_traces_jsonl(data("walkthrough.jsonl"), &opts).map_err(|e| e.to_string())?;
    ensure!(traces.len() == 1 && traces[0].transactions.len() == 6, "fixture should hold 6 transactions");

    for base in [Profile::default(), Profile::preset("englehardt2016").unwrap()] {
        let mut p = base.clone();
        p.filter.min_len = 2;
        let r = resolver();
        let ids = extract_identifiers(&traces, &p, &r);
        let d = detect(&traces, &ids, &p, &r, None).map_err(|e| e.to_string())?;
        ensure!(d.events.len() == 1, "{}: expected 1 event, got {:?}", p.name, d.events);
        let e = &d.events[0];
        ensure!(
            e.sender.name == "tracker1.com"
                && e.receiver.name == "tracker2.com"
                && e.location == Location::QueryParam
                && e.method == DetectionMethod::SharedIdHeuristic
                && e.shared_value == "ABC",
            "unexpected event {e:?}"
        );

        let mut p = base;
        p.filter.min_len = 10;
        let ids = extract_identifiers(&traces, &p, &r);
        let d = detect(&traces, &ids, &p, &r, None).map_err(|e| e.to_string())?;
        ensure!(d.events.is_empty(), "{}: min_len 10 should give no events", p.name);
    }
    let took = start.elapsed();
    ensure!(took < Duration::from_secs(1), "took {took:?}");
    Ok(format!("1 event at min_len 2, 0 at min_len 10 ({took:.2?})"))
}

// 2 ------------------------------------------------------------------------

fn noise(n: usize) -> NoiseParams {
    NoiseParams {
        short_values: n,
        timestamp_values: n,
        multi_value_keys: n,
        dynamic_keys: n,
        session_cookies: n,
        cross_user_values: n,
    }
}

fn synthetic_oracle() -> Outcome {
    let profile = Profile::preset("synth").unwrap();
    let slowest = Mutex::new(Duration::ZERO);
    par_for(25, |i| {
        let start = Instant::now();
        let params = SynthParams {
            seed: 1000 + i as u64,
            n_users: 2,
            n_transactions: 10_000,
            plant_syncs: 50,
            id_length: 16,
            noise: noise(4),
            ..SynthParams::default()
        };
        let (traces, truth) = synth::generate(&params).map_err(|e| e.to_string())?;
        let locs: BTreeSet<Location> = truth.events.iter().map(|e| e.location).collect();
        ensure!(truth.events.len() == 50 && locs.len() == 6, "seed {}: truth does not cover all locations", params.seed);
        let r = resolver();
        let ids = extract_identifiers(&traces, &profile, &r);
        let events = detect_shared(&traces, &ids, &profile, &r);
        let s = synth::score(&events, &truth.events);
        ensure!(
            s.precision == 1.0 && s.recall == 1.0,
            "seed {}: precision {} recall {} (fp {}, fn {})",
            params.seed,
            s.precision,
            s.recall,
            s.false_positives,
            s.false_negatives
        );
        let took = start.elapsed();
        let mut w = slowest.lock().unwrap();
        *w = (*w).max(took);
        Ok(())
    })?;
    let slowest = slowest.into_inner().unwrap();
    ensure!(slowest < Duration::from_secs(10), "slowest seed took {slowest:?}");

    par_for(100, |i| {
        let params = SynthParams {
            seed: 5000 + i as u64,
            n_users: 2,
            n_transactions: 1_000,
            plant_syncs: 0,
            noise: noise(3),
            ..SynthParams::default()
        };
        let (traces, truth) = synth::generate(&params).map_err(|e| e.to_string())?;
        ensure!(truth.events.is_empty(), "seed {}: truth not empty", params.seed);
        let r = resolver();
        let ids = extract_identifiers(&traces, &profile, &r);
        let events = detect_shared(&traces, &ids, &profile, &r);
        ensure!(events.is_empty(), "seed {}: false positives {:?}", params.seed, &events[..events.len().min(3)]);
        Ok(())
    })?;
    Ok(format!("25 seeds at P=R=1 (slowest {slowest:.2?}), 100 unplanted seeds with 0 events"))
}

// 3 ------------------------------------------------------------------------

fn random_string(rng: &mut ChaCha8Rng, alphabet: &[u8], len: usize) -> String {
    (0..len).map(|_| *alphabet.choose(rng).unwrap() as char).collect()
}

const VALUE_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.:,|&=";

fn random_profile(rng: &mut ChaCha8Rng) -> Profile {
    let mut p = Profile::default();
    let f = &mut p.filter;
    f.min_len = rng.random_range(0..12);
    f.max_len = rng.random_bool(0.3).then(|| rng.random_range(f.min_len + 1..40));
    f.charset_extra = match rng.random_range(0..3) {
        0 => None,
        1 => Some(vec!['-', '_']),
        _ => Some(vec!['-', '_', '.', ':']),
    };
    f.delimiters = ['&', ':', ',', '|'].into_iter().filter(|_| rng.random_bool(0.5)).collect();
    f.similarity_threshold = rng.random_bool(0.5).then(|| rng.random_range(0.2..0.9));
    f.drop_multi_value_keys = rng.random_bool(0.5);
    f.drop_dynamic_keys = rng.random_bool(0.5);
    f.keyword_blocklist = rng.random_bool(0.3).then(KeywordBlocklist::bundled);
    f.cross_user_dedup = rng.random_bool(0.5);
    f.session_policy = match rng.random_range(0..3) {
        0 => SessionPolicy::Keep,
        1 => SessionPolicy::DropNoExpiry,
        _ => SessionPolicy::DropExpiringBefore { days: 30 },
    };
    p
}

fn random_cookie_trace(rng: &mut ChaCha8Rng, user: &str, shared: &[String]) -> (Trace, Vec<String>) {
    let hosts = ["a.com", "www.a.com", "t1.net", "px.t2.io", "t3.co.uk"];
    let keys = ["uid", "id", "sess", "ts", "m", "x"];
    let mut t = Trace::new(user);
    let mut raw_values = Vec::new();
    for seq in 0..rng.random_range(1..12u64) {
        let host = hosts.choose(rng).unwrap();
        let mut lines = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            let value = if !shared.is_empty() && rng.random_bool(0.2) {
                shared.choose(rng).unwrap().clone()
            } else {
                let len = rng.random_range(0..30);
                random_string(rng, VALUE_ALPHABET, len)
            };
            raw_values.push(value.clone());
            let attrs = match rng.random_range(0..3) {
                0 => String::new(),
                1 => format!("; Max-Age={}", rng.random_range(60..100_000_000)),
                _ => "; Max-Age=31536000; Path=/".to_owned(),
            };
            lines.push(format!("{}={value}{attrs}", keys.choose(rng).unwrap()));
        }
        let mut resp = Headers::new();
        for l in &lines {
            resp.push("set-cookie", l.clone());
        }
        t.transactions.push(HttpTransaction {
            seq_no: seq,
            timestamp: 1_700_000_000_000 + seq as i64 * 1000,
            user_id: user.to_owned(),
            landing_page: parse_url("https://www.a.com/").unwrap(),
            method: "GET".into(),
            url: parse_url(&format!("https://{host}/p")).unwrap(),
            referer: None,
            request_headers: Headers::new(),
            post_body: None,
            response_status: 200,
            response_headers: resp,
            set_cookie_lines: lines,
        });
    }
    (t, raw_values)
}

fn is_subsequence(sub: &[String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|o| o == s))
}

fn ids_jsonl(ids: &IdentifierSet) -> String {
    let mut buf = Vec::new();
    syncscope::identifiers::write_identifiers_jsonl(ids, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn filter_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let blocklist = KeywordBlocklist::bundled();
    let mut total_ids = 0;
    for case in 0..1000 {
        let profile = random_profile(&mut rng);
        let f = &profile.filter;

        // Each filter on its own keeps a subsequence of its input; splitting
        // yields substrings.
        let values: Vec<String> = (0..rng.random_range(0..20))
            .map(|_| {
                let len = rng.random_range(0..25);
                random_string(&mut rng, VALUE_ALPHABET, len)
            })
            .collect();
        for v in &values {
            for tok in split_on_delimiters(v, &f.delimiters, rng.random_bool(0.5)) {
                ensure!(v.contains(tok.as_str()), "case {case}: token {tok:?} not in {v:?}");
            }
        }
        let outs = [
            filter_length(values.clone(), f.min_len, f.max_len),
            filter_charset(values.clone(), &['-', '_']),
            filter_keywords(values.clone(), &blocklist),
            filter_similarity(values.clone(), f.similarity_threshold.unwrap_or(0.5)),
        ];
        for out in &outs {
            ensure!(is_subsequence(out, &values), "case {case}: filter output is not a subset");
        }

        // Whole pipeline over 1 to 3 users.
        let shared: Vec<String> = (0..3).map(|_| random_string(&mut rng, b"ABCDEF0123456789", 14)).collect();
        let mut traces = Vec::new();
        let mut raw = Vec::new();
        for u in 0..rng.random_range(1..4) {
            let (t, r) = random_cookie_trace(&mut rng, &format!("u{u}"), &shared);
            traces.push(t);
            raw.extend(r);
        }
        let r = resolver();
        let ids = extract_identifiers(&traces, &profile, &r);
        for id in ids.values().flatten() {
            total_ids += 1;
            ensure!(oracle_id_looking(&id.value, f), "case {case}: {:?} fails length or charset", id.value);
            ensure!(
                raw.iter().any(|v| v.contains(id.value.as_str())),
                "case {case}: {:?} not derived from any cookie value",
                id.value
            );
        }
        let again = extract_identifiers(&traces, &profile, &r);
        ensure!(ids_jsonl(&ids) == ids_jsonl(&again), "case {case}: rerun differs");
        let mut reversed = traces.clone();
        reversed.reverse();
        let rev = extract_identifiers(&reversed, &profile, &r);
        ensure!(ids_jsonl(&ids) == ids_jsonl(&rev), "case {case}: trace order changes the result");
    }
    Ok(format!("1000 random stores, {total_ids} identifiers checked"))
}

// 4 ------------------------------------------------------------------------

/// Greedy decomposition by exhaustive search: the longest common block
/// (leftmost in `a`, then in `b`), then both sides recursively.
fn oracle_matches(a: &[u8], b: &[u8]) -> usize {
    for k in (1..=a.len().min(b.len())).rev() {
        for i in 0..=a.len() - k {
            for j in 0..=b.len() - k {
                if a[i..i + k] == b[j..j + k] {
                    return k + oracle_matches(&a[..i], &b[..j]) + oracle_matches(&a[i + k..], &b[j + k..]);
                }
            }
        }
    }
    0
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let (a, b) = if b < a { (b, a) } else { (a, b) };
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * oracle_matches(a.as_bytes(), b.as_bytes()) as f64 / (a.len() + b.len()) as f64
}

fn similarity_oracle() -> Outcome {
    let mut words = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..6 {
        frontier = frontier
            .iter()
            .flat_map(|w| ['a', 'b', 'c'].map(|c| format!("{w}{c}")))
            .collect();
        words.extend(frontier.iter().cloned());
    }
    let n = words.len();
    par_for(n, |i| {
        let a = &words[i];
        for b in &words {
            let got = ratcliff_obershelp(a, b);
            let want = oracle_similarity(a, b);
            ensure!(got == want, "sim({a:?}, {b:?}) = {got}, oracle {want}");
        }
        Ok(())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let la = rng.random_range(0..40);
        let lb = rng.random_range(0..40);
        let a: String = (&mut rng).sample_iter(Alphanumeric).take(la).map(char::from).collect();
        let b: String = (&mut rng).sample_iter(Alphanumeric).take(lb).map(char::from).collect();
        let s = ratcliff_obershelp(&a, &b);
        ensure!((0.0..=1.0).contains(&s), "sim({a:?}, {b:?}) = {s} out of range");
        ensure!(ratcliff_obershelp(&a, &a) == 1.0, "sim({a:?}, itself) != 1");
        ensure!(s == ratcliff_obershelp(&b, &a), "sim({a:?}, {b:?}) not symmetric");
    }
    let x = ratcliff_obershelp("abcd", "abce");
    ensure!(x == 0.75, "sim(abcd, abce) = {x}");
    Ok(format!("{} exhaustive pairs, 10000 random pairs", n * n))
}

// 5 ------------------------------------------------------------------------

fn psl_arg(s: &str) -> Option<String> {
    let s = s.trim();
    (s != "null").then(|| s.trim_matches('\'').to_owned())
}

fn psl_vectors() -> Outcome {
    let text = std::fs::read_to_string(data("test_psl.txt")).map_err(|e| e.to_string())?;
    let rules = SuffixRules::bundled();
    let mut checked = 0;
    let mut failures = Vec::new();
    for line in text.lines() {
        let Some(args) = line.trim().strip_prefix("checkPublicSuffix(").and_then(|l| l.strip_suffix(");")) else {
            continue;
        };
        let (input, expected) = args.split_once(',').ok_or("malformed vector")?;
        let (input, expected) = (psl_arg(input), psl_arg(expected));
        let got = input.as_deref().and_then(|h| rules.registrable_domain(h));
        checked += 1;
        if got != expected {
            failures.push(format!("{input:?}: got {got:?}, expected {expected:?}"));
        }
    }
    ensure!(checked > 0, "no vectors found");
    ensure!(failures.is_empty(), "{} of {checked} disagree: {}", failures.len(), failures.join("; "));
    Ok(format!("{checked}/{checked} vectors agree"))
}

// 6 ------------------------------------------------------------------------

const HOSTS: [&str; 8] = [
    "a.com",
    "www.a.com",
    "b.net",
    "cdn.b.net",
    "c.org",
    "shop.d.co.uk",
    "x.d.co.uk",
    "e.io",
];

fn random_two_pass_case(rng: &mut ChaCha8Rng) -> (Trace, IdentifierSet, Profile) {
    let mut profile = Profile::default();
    profile.entity_mode = if rng.random_bool(0.5) { EntityMode::Etld1 } else { EntityMode::Domain };
    profile.party_strategy = if profile.entity_mode == EntityMode::Domain {
        PartyStrategy::StringMatch
    } else {
        PartyStrategy::Etld1
    };
    profile.require_third_party_receiver = rng.random_bool(0.5);
    profile.two_pass.include_redirects = rng.random_bool(0.5);
    profile.two_pass.count_mode = if rng.random_bool(0.5) {
        TwoPassCountMode::Entities
    } else {
        TwoPassCountMode::Requests
    };
    profile.filter.charset_extra = rng.random_bool(0.5).then(|| vec!['-', '_']);
    profile.locations = ScanLocationSet::new([Location::QueryParam, Location::Path, Location::RefererUrl]);

    let mut pool: Vec<String> = (0..10).map(|_| random_string(rng, b"ABCDEFGHJK0123456789", 12)).collect();
    pool.extend(["ab", "xyz1", "Q-R_STUVWXYZ12", "shorty"].map(String::from));

    let resolver = resolver().with_mode(profile.entity_mode);
    let mut ids = Vec::new();
    for v in pool.iter().take(10) {
        if rng.random_bool(0.6) {
            let host = HOSTS.choose(rng).unwrap();
            ids.push(Identifier {
                value: v.clone(),
                owner: resolver.resolve(host),
                owner_host: (*host).into(),
                source_key: "uid".into(),
                user_id: "u".into(),
                filter_trail: vec![],
                first_seen: 0,
            });
        }
    }
    let ids: IdentifierSet = [("u".to_owned(), ids)].into_iter().collect();

    let landings = ["https://a.com/", "https://c.org/home", "https://e.io/"];
    let mut t = Trace::new("u");
    for seq in 0..rng.random_range(1..=200u64) {
        let host = HOSTS.choose(rng).unwrap();
        let mut path = "/px".to_owned();
        if rng.random_bool(0.3) {
            path = format!("/m/{}/p.gif", pool.choose(rng).unwrap());
        }
        let query: Vec<String> = (0..rng.random_range(0..3))
            .map(|k| format!("k{k}={}", pool.choose(rng).unwrap()))
            .collect();
        let url = format!("https://{host}{path}?{}", query.join("&"));
        let mut request_headers = Headers::new();
        if rng.random_bool(0.4) {
            request_headers.push(
                "referer",
                format!("https://{}/f?r={}", HOSTS.choose(rng).unwrap(), pool.choose(rng).unwrap()),
            );
        }
        let mut response_headers = Headers::new();
        let status = if rng.random_bool(0.2) {
            response_headers.push(
                "location",
                format!("https://{}/s?u={}", HOSTS.choose(rng).unwrap(), pool.choose(rng).unwrap()),
            );
            302
        } else {
            200
        };
        t.transactions.push(HttpTransaction {
            seq_no: seq,
            timestamp: seq as i64 * 7,
            user_id: "u".into(),
            landing_page: parse_url(landings.choose(rng).unwrap()).unwrap(),
            method: if rng.random_bool(0.8) { "GET" } else { "POST" }.into(),
            url: parse_url(&url).unwrap(),
            referer: request_headers.get("referer").map(|r| parse_url(r).unwrap()),
            request_headers,
            post_body: None,
            response_status: status,
            response_headers,
            set_cookie_lines: vec![],
        });
    }
    (t, ids, profile)
}

fn oracle_id_looking(token: &str, f: &FilterConfig) -> bool {
    let n = token.chars().count();
    n > f.min_len
        && f.max_len.is_none_or(|m| n <= m)
        && f.charset_extra
            .as_ref()
            .is_none_or(|extra| token.chars().all(|c| c.is_ascii_alphanumeric() || extra.contains(&c)))
}

/// Pairwise sharing test over every occurrence, then the identifier join.
fn two_pass_oracle(trace: &Trace, ids: &IdentifierSet, profile: &Profile) -> (Vec<IdSharingEvent>, Vec<SyncEvent>) {
    let r = resolver().with_mode(profile.entity_mode);
    let party = resolver().with_mode(profile.party_strategy.entity_mode());
    let mut occ: Vec<(String, Occurrence)> = Vec::new();
    for tx in &trace.transactions {
        for (location, token) in scan_id_looking(tx, &profile.filter, profile.two_pass.include_redirects) {
            if oracle_id_looking(&token, &profile.filter) {
                occ.push((
                    token,
                    Occurrence {
                        seq_no: tx.seq_no,
                        timestamp: tx.timestamp,
                        location,
                        receiver: r.resolve(&tx.url.host),
                    },
                ));
            }
        }
    }
    let mut shared_tokens = BTreeSet::new();
    for (i, (ti, oi)) in occ.iter().enumerate() {
        for (tj, oj) in &occ[i + 1..] {
            let distinct = match profile.two_pass.count_mode {
                TwoPassCountMode::Entities => oi.receiver != oj.receiver,
                TwoPassCountMode::Requests => oi.seq_no != oj.seq_no,
            };
            if ti == tj && distinct {
                shared_tokens.insert(ti.clone());
            }
        }
    }
    let mut sharing = Vec::new();
    let mut events = Vec::new();
    for token in shared_tokens {
        let mut list: Vec<Occurrence> = occ.iter().filter(|(t, _)| *t == token).map(|(_, o)| o.clone()).collect();
        list.sort_by_key(|o| (o.seq_no, o.location));
        for o in &list {
            let tx = trace.transaction(o.seq_no).unwrap();
            let landing = r.resolve(&tx.landing_page.host);
            let gate = !profile.require_third_party_receiver
                || party.resolve(&tx.url.host) != party.resolve(&tx.landing_page.host);
            if !gate {
                continue;
            }
            for id in ids[&trace.user_id].iter().filter(|i| i.value == token && i.owner != o.receiver) {
                events.push(SyncEvent {
                    user_id: trace.user_id.clone(),
                    seq_no: o.seq_no,
                    timestamp: o.timestamp,
                    shared_value: token.clone(),
                    sender: id.owner.clone(),
                    receiver: o.receiver.clone(),
                    location: o.location,
                    method: DetectionMethod::TwoPassIdLooking,
                    relation: if id.owner == landing {
                        Relation::FirstPartyLeak
                    } else {
                        Relation::ThirdPartySync
                    },
                    matched_key: Some(id.source_key.clone()),
                });
            }
        }
        sharing.push(IdSharingEvent {
            user_id: trace.user_id.clone(),
            token,
            occurrences: list,
        });
    }
    normalize_events(&mut events);
    (sharing, events)
}

fn two_pass_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut n_sharing, mut n_events, mut n_subsumed) = (0, 0, 0);
    for case in 0..100 {
        let (trace, ids, profile) = random_two_pass_case(&mut rng);
        let traces = [trace];
        let r = resolver();
        let got = detect_two_pass(&traces, &ids, &profile, &r);
        let want = two_pass_oracle(&traces[0], &ids, &profile);
        ensure!(got.0 == want.0, "case {case}: ID-sharing events differ");
        ensure!(got.1 == want.1, "case {case}: sync events differ");
        n_sharing += got.0.len();
        n_events += got.1.len();

        // Subsumption, under entity counting.
        let mut p = profile.clone();
        p.two_pass.count_mode = TwoPassCountMode::Entities;
        let (sharing, two_pass) = detect_two_pass(&traces, &ids, &p, &r);
        let reach: HashSet<&str> = sharing.iter().map(|s| s.token.as_str()).collect();
        let key = |e: &SyncEvent| (e.seq_no, e.shared_value.clone(), e.location, e.sender.clone(), e.receiver.clone());
        let found: HashSet<_> = two_pass.iter().map(key).collect();
        for e in detect_shared(&traces, &ids, &p, &r) {
            let tx = traces[0].transaction(e.seq_no).unwrap();
            if tx.method != "GET" || !reach.contains(e.shared_value.as_str()) {
                continue;
            }
            n_subsumed += 1;
            ensure!(found.contains(&key(&e)), "case {case}: shared event {e:?} missing from two-pass output");
        }
    }
    ensure!(n_sharing > 0 && n_events > 0 && n_subsumed > 0, "random cases exercised nothing");
    Ok(format!(
        "100 traces, {n_sharing} ID-sharing and {n_events} sync events equal, {n_subsumed} shared events subsumed"
    ))
}

// 7 ------------------------------------------------------------------------

struct Expected {
    name: &'static str,
    min_len: usize,
    max_len: Option<usize>,
    similarity: Option<f64>,
    session: SessionPolicy,
    charset: Option<&'static str>,
    delimiters: &'static str,
    detector: DetectionMethod,
}

fn profile_fidelity() -> Outcome {
    use DetectionMethod::*;
    use SessionPolicy::*;
    let table = [
        Expected {
            name: "olejnik2014",
            min_len: 10,
            max_len: None,
            similarity: None,
            session: Keep,
            charset: None,
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "acar2014",
            min_len: 10,
            max_len: None,
            similarity: Some(0.33),
            session: DropExpiringBefore { days: 30 },
            charset: None,
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "englehardt2016",
            min_len: 7,
            max_len: Some(100),
            similarity: Some(0.66),
            session: DropExpiringBefore { days: 90 },
            charset: Some("-_="),
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "fouad2020",
            min_len: 10,
            max_len: None,
            similarity: None,
            session: Keep,
            charset: Some("-_,."),
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "papadogiannakis2021",
            min_len: 5,
            max_len: None,
            similarity: None,
            session: Keep,
            charset: None,
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "papadopoulos2019",
            min_len: 10,
            max_len: None,
            similarity: None,
            session: DropNoExpiry,
            charset: None,
            delimiters: "&;",
            detector: TwoPassIdLooking,
        },
        Expected {
            name: "ghosh2015",
            min_len: 10,
            max_len: None,
            similarity: None,
            session: Keep,
            charset: None,
            delimiters: "&:",
            detector: SharedIdHeuristic,
        },
        Expected {
            name: "header_scan",
            min_len: 8,
            max_len: None,
            similarity: None,
            session: Keep,
            charset: Some("-_="),
            delimiters: "&;",
            detector: SharedIdHeuristic,
        },
    ];
    for e in &table {
        let p = Profile::preset(e.name).ok_or(format!("missing preset {}", e.name))?;
        let f = &p.filter;
        ensure!(f.min_len == e.min_len, "{}: min_len {}", e.name, f.min_len);
        ensure!(f.max_len == e.max_len, "{}: max_len {:?}", e.name, f.max_len);
        ensure!(f.similarity_threshold == e.similarity, "{}: similarity {:?}", e.name, f.similarity_threshold);
        ensure!(f.session_policy == e.session, "{}: session {:?}", e.name, f.session_policy);
        let charset: Option<Vec<char>> = e.charset.map(|c| c.chars().collect());
        ensure!(f.charset_extra == charset, "{}: charset {:?}", e.name, f.charset_extra);
        ensure!(f.delimiters == e.delimiters.chars().collect::<Vec<_>>(), "{}: delimiters {:?}", e.name, f.delimiters);
        ensure!(p.detectors == BTreeSet::from([e.detector]), "{}: detectors {:?}", e.name, p.detectors);
    }
    let olejnik = Profile::preset("olejnik2014").unwrap();
    ensure!(
        olejnik.locations == ScanLocationSet::new([Location::QueryParam]),
        "olejnik2014 should scan parameters only"
    );
    let pg = Profile::preset("papadogiannakis2021").unwrap();
    ensure!(
        pg.filter.keyword_blocklist.is_some() && pg.locations.contains(Location::PostBody),
        "papadogiannakis2021 should filter keywords and scan POST bodies"
    );
    Ok(format!("{} presets match", table.len()))
}

// 8 ------------------------------------------------------------------------

fn report_arithmetic() -> Outcome {
    let profile = Profile::preset("synth").unwrap();
    let r = resolver();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for seed in 0..5 {
        let params = SynthParams {
            seed,
            n_users: 2,
            n_transactions: 800,
            plant_syncs: 37 + seed as usize,
            plant_locations: Location::ALL
                .iter()
                .enumerate()
                .map(|(i, l)| (*l, 1.0 + i as f64))
                .collect(),
            ..SynthParams::default()
        };
        let (traces, _) = synth::generate(&params).map_err(|e| e.to_string())?;
        let ids = extract_identifiers(&traces, &profile, &r);
        let events = detect_shared(&traces, &ids, &profile, &r);
        let report = aggregate(&events, &traces, &r, 10).map_err(|e| e.to_string())?;
        let sum: f64 = report.locations.iter().filter_map(|l| l.percent).sum();
        ensure!((sum - 100.0).abs() <= 1e-9, "seed {seed}: location percentages sum to {sum}");

        let mut shuffled = events.clone();
        for _ in 0..100 {
            shuffled.shuffle(&mut rng);
            let again = aggregate(&shuffled, &traces, &r, 10).map_err(|e| e.to_string())?;
            ensure!(again == report, "seed {seed}: report depends on event order");
        }
        let json = render(&report, ReportFormat::Json);
        let back: Report = serde_json::from_str(&json).map_err(|e| e.to_string())?;
        ensure!(back == report, "seed {seed}: JSON render does not round-trip");
        checked += 1;
    }
    Ok(format!("{checked} reports: sums, 100 shuffles each, JSON round trip"))
}

// 9 ------------------------------------------------------------------------

fn ingestion_round_trip() -> Outcome {
    let params = SynthParams {
        seed: 9,
        n_users: 2,
        n_transactions: 2_000,
        plant_syncs: 30,
        noise: noise(2),
        ..SynthParams::default()
    };
    let (traces, _) = synth::generate(&params).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_traces_jsonl(&traces, &mut buf).map_err(|e| e.to_string())?;
    let opts = IngestOptions {
        on_error: OnError::Fail,
        user_id: None,
    };
    let (back, report) = read_traces_jsonl(&buf[..], Path::new("synth.jsonl"), &opts).map_err(|e| e.to_string())?;
    ensure!(report.skipped == 0, "JSONL skipped {} lines", report.skipped);
    ensure!(back == traces, "JSONL re-ingest differs from the generated traces");

    let (har, report) = load_har(data("chrome_export.har"), &opts).map_err(|e| e.to_string())?;
    ensure!(report.skipped == 0, "HAR skipped {} entries", report.skipped);
    ensure!(har.transactions.len() == 6, "HAR gave {} transactions", har.transactions.len());
    Ok(format!(
        "{} transactions round-tripped, HAR {} entries with 0 skipped",
        traces.iter().map(|t| t.transactions.len()).sum::<usize>(),
        report.parsed
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("walkthrough fixture", walkthrough_fixture),
        ("synthetic oracle", synthetic_oracle),
        ("filter pipeline properties", filter_properties),
        ("similarity oracle", similarity_oracle),
        ("public suffix vectors", psl_vectors),
        ("two-pass equivalence", two_pass_equivalence),
        ("profile fidelity", profile_fidelity),
        ("report arithmetic", report_arithmetic),
        ("ingestion round trip", ingestion_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(f).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
