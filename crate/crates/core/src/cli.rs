//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::detect::{self, write_events_jsonl, KnownPairs};
use crate::entity::EntityResolver;
use crate::error::Error;
use crate::identifiers::{extract_identifiers, write_identifiers_jsonl, KeywordBlocklist};
use crate::ingest::{self, har, jsonl, IngestOptions, IngestReport, InputFormat, OnError};
use crate::model::{DetectionMethod, Location, Trace};
use crate::party::{load_org_map, OrgMap, PartyStrategy};
use crate::profile::Profile;
use crate::psl::SuffixRules;
use crate::report::{aggregate, render, ReportFormat};
use crate::synth::{self, NoiseParams, SynthParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INGEST: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "syncscope", version, about = "Detect cookie synchronization in captured HTTP traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract identifiers, detect syncs and write a report.
    Detect(DetectArgs),
    /// Extract identifiers only.
    ExtractIds(ExtractArgs),
    /// Generate synthetic traces with planted syncs.
    Synth(SynthArgs),
    /// Score detected events against ground truth.
    Score(ScoreArgs),
    /// Build a report from an event file and its traces.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Trace files; `-` reads standard input.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
    #[arg(long, default_value = "fail")]
    on_error: OnError,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Preset name or profile file.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    psl: Option<PathBuf>,
    #[arg(long)]
    orgs: Option<PathBuf>,
    #[arg(long)]
    keywords: Option<PathBuf>,
    #[arg(long)]
    party_mode: Option<PartyStrategy>,
    /// Override the profile's minimum identifier length.
    #[arg(long)]
    min_len: Option<usize>,
    /// Run configuration file; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Known (referrer, request) pair list.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Comma-separated detectors: shared, two-pass, known-pairs.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<DetectionMethod>>,
    /// Write identifiers.jsonl, events.jsonl and the report here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    identifiers: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    report_format: ReportFormat,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    profile: ProfileArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    users: usize,
    /// Transactions per user.
    #[arg(long, default_value_t = 100)]
    transactions: usize,
    #[arg(long, default_value_t = 8)]
    trackers: usize,
    #[arg(long, default_value_t = 4)]
    publishers: usize,
    #[arg(long, default_value_t = 0)]
    plant: usize,
    /// Locations for planted syncs, equally weighted.
    #[arg(long, value_delimiter = ',')]
    locations: Option<Vec<Location>>,
    #[arg(long, default_value_t = 16)]
    id_length: usize,
    #[arg(long, default_value_t = 0)]
    noise_short: usize,
    #[arg(long, default_value_t = 0)]
    noise_timestamp: usize,
    #[arg(long, default_value_t = 0)]
    noise_multi_value: usize,
    #[arg(long, default_value_t = 0)]
    noise_dynamic: usize,
    #[arg(long, default_value_t = 0)]
    noise_session: usize,
    #[arg(long, default_value_t = 0)]
    noise_cross_user: usize,
    /// Trace output; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth output.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    psl: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    report_format: ReportFormat,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings read from `--config`. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    inputs: Option<Vec<PathBuf>>,
    format: Option<String>,
    on_error: Option<String>,
    profile: Option<String>,
    party_mode: Option<String>,
    psl: Option<PathBuf>,
    orgs: Option<PathBuf>,
    keywords: Option<PathBuf>,
    pairs: Option<PathBuf>,
    detectors: Option<Vec<String>>,
    min_len: Option<usize>,
    out_dir: Option<PathBuf>,
    report_format: Option<String>,
}

enum Failure {
    Invalid(String),
    Ingest(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::MalformedUrl(_) | Error::MalformedCookie(_) => Failure::Ingest(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Run with the given arguments (including the program name) and return
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Detect(a) => run_detect(a),
        Command::ExtractIds(a) => run_extract(a),
        Command::Synth(a) => run_synth(a),
        Command::Score(a) => run_score(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::Ingest(msg)) => {
            eprintln!("ingest error: {msg}");
            EXIT_INGEST
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

fn parse_opt<T: std::str::FromStr<Err = String>>(v: Option<String>) -> CliResult<Option<T>> {
    v.map(|s| s.parse::<T>()).transpose().map_err(invalid)
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// A resource from the flag, else from `SYNCSCOPE_DATA_DIR` when present
/// there.
fn resource(flag: Option<PathBuf>, file_name: &str) -> Option<PathBuf> {
    flag.or_else(|| {
        let dir = std::env::var_os("SYNCSCOPE_DATA_DIR")?;
        let p = Path::new(&dir).join(file_name);
        p.is_file().then_some(p)
    })
}

struct Setup {
    profile: Profile,
    resolver: EntityResolver,
}

fn setup(args: ProfileArgs, cfg: &mut RunConfig) -> CliResult<Setup> {
    let name = cfg.profile.take().or(args.profile).unwrap_or_else(|| "olejnik2014".to_owned());
    let mut profile = Profile::resolve(&name)?;
    if let Some(m) = parse_opt::<PartyStrategy>(cfg.party_mode.take())?.or(args.party_mode) {
        profile.party_strategy = m;
    }
    if let Some(n) = cfg.min_len.take().or(args.min_len) {
        profile.filter.min_len = n;
    }
    if let Some(path) = resource(cfg.keywords.take().or(args.keywords), "keywords.txt") {
        profile.filter.keyword_blocklist = Some(KeywordBlocklist::load(&path)?);
    }
    profile.validate()?;

    let rules = match resource(cfg.psl.take().or(args.psl), "public_suffix_list.dat") {
        Some(p) => Arc::new(SuffixRules::load(&p)?),
        None => SuffixRules::bundled(),
    };
    let orgs = match resource(cfg.orgs.take().or(args.orgs), "orgs.tsv") {
        Some(p) => {
            let m = load_org_map(&p)?;
            if m.duplicate_warnings > 0 {
                log::warn!("{}: {} duplicate domains, last entry kept", p.display(), m.duplicate_warnings);
            }
            m
        }
        None => OrgMap::default(),
    };
    let resolver = EntityResolver::new(profile.entity_mode, rules, Arc::new(orgs));
    Ok(Setup { profile, resolver })
}

fn infer_format(path: &Path) -> InputFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("har") => InputFormat::Har,
        _ => InputFormat::Jsonl,
    }
}

fn load_inputs(args: &InputArgs, cfg: &mut RunConfig) -> CliResult<Vec<Trace>> {
    let inputs = cfg.inputs.take().unwrap_or_else(|| args.inputs.clone());
    let format = parse_opt::<InputFormat>(cfg.format.take())?.or(args.format);
    let on_error = parse_opt::<OnError>(cfg.on_error.take())?.unwrap_or(args.on_error);
    let opts = IngestOptions {
        on_error,
        user_id: None,
    };
    let mut traces = Vec::new();
    let mut total = IngestReport::default();
    for path in &inputs {
        let fmt = format.unwrap_or_else(|| infer_format(path));
        let (ts, report) = if path.as_os_str() == "-" {
            let origin = Path::new("<stdin>");
            let stdin = std::io::stdin();
            match fmt {
                InputFormat::Jsonl => jsonl::read_traces_jsonl(stdin.lock(), origin, &opts)?,
                InputFormat::Har => {
                    let mut text = String::new();
                    stdin
                        .lock()
                        .read_to_string(&mut text)
                        .map_err(|e| Failure::Ingest(format!("<stdin>: {e}")))?;
                    let (t, r) = har::parse_har(&text, origin, "stdin", on_error)?;
                    (vec![t], r)
                }
            }
        } else {
            if !path.is_file() {
                return Err(Failure::Ingest(format!("{}: no such file", path.display())));
            }
            ingest::load(path, fmt, &opts).map_err(|e| match e {
                Error::Io { .. } => Failure::Ingest(e.to_string()),
                other => other.into(),
            })?
        };
        total.merge(&report);
        traces.extend(ts);
    }
    if total.skipped > 0 {
        eprintln!("skipped {} malformed entries ({} parsed)", total.skipped, total.parsed);
    }
    Ok(ingest::merge_by_user(traces))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_to(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult {
    let res = match path {
        Some(p) if p.as_os_str() != "-" => {
            let mut w = create(p)?;
            f(&mut w).and_then(|_| w.flush())
        }
        _ => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock).and_then(|_| lock.flush())
        }
    };
    res.map_err(|e| invalid(format!("write failed: {e}")))
}

fn run_detect(a: DetectArgs) -> CliResult {
    let mut cfg = load_config(a.profile.config.as_deref())?;
    let pairs_path = cfg.pairs.take().or(a.pairs.clone());
    let detectors = match cfg.detectors.take() {
        Some(list) => Some(
            list.iter()
                .map(|s| s.parse::<DetectionMethod>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(invalid)?,
        ),
        None => a.detectors.clone(),
    };
    let report_format = parse_opt::<ReportFormat>(cfg.report_format.take())?.unwrap_or(a.report_format);
    let out_dir = cfg.out_dir.take().or(a.out_dir.clone());

    let Setup { mut profile, resolver } = setup(a.profile, &mut cfg)?;
    if let Some(d) = detectors {
        profile.detectors = d.into_iter().collect();
    }
    let pairs_path = resource(pairs_path, "pairs.tsv");
    if profile.detectors.contains(&DetectionMethod::KnownPairList) && pairs_path.is_none() {
        return Err(invalid("the known-pairs detector needs --pairs"));
    }
    let pairs = pairs_path.map(|p| KnownPairs::load(&p)).transpose()?;

    let traces = load_inputs(&a.input, &mut cfg)?;
    let ids = extract_identifiers(&traces, &profile, &resolver);
    let detection = detect::detect(&traces, &ids, &profile, &resolver, pairs.as_ref())?;
    let report = aggregate(&detection.events, &traces, &resolver, a.top_k)?;
    let rendered = render(&report, report_format);

    let ext = match report_format {
        ReportFormat::Json => "json",
        ReportFormat::Csv => "csv",
        ReportFormat::Text => "txt",
    };
    let in_dir = |name: &str| out_dir.as_ref().map(|d| d.join(name));
    let ids_path = a.identifiers.or_else(|| in_dir("identifiers.jsonl"));
    let events_path = a.events.or_else(|| in_dir("events.jsonl"));
    let report_path = a.report.or_else(|| in_dir(&format!("report.{ext}")));

    if let Some(p) = &ids_path {
        write_to(Some(p), |w| write_identifiers_jsonl(&ids, w))?;
    }
    if let Some(p) = &events_path {
        write_to(Some(p), |w| write_events_jsonl(&detection.events, w))?;
    }
    if let Some(dir) = &out_dir {
        if !detection.id_sharing.is_empty() {
            write_to(Some(&dir.join("id_sharing.jsonl")), |w| {
                for s in &detection.id_sharing {
                    serde_json::to_writer(&mut *w, s)?;
                    w.write_all(b"\n")?;
                }
                Ok(())
            })?;
        }
    }
    match &report_path {
        Some(p) => {
            write_to(Some(p), |w| w.write_all(rendered.as_bytes()))?;
            eprintln!("{} events; report written to {}", report.totals.events, p.display());
        }
        None => write_to(None, |w| w.write_all(rendered.as_bytes()))?,
    }
    Ok(())
}

fn run_extract(a: ExtractArgs) -> CliResult {
    let mut cfg = load_config(a.profile.config.as_deref())?;
    let Setup { profile, resolver } = setup(a.profile, &mut cfg)?;
    let traces = load_inputs(&a.input, &mut cfg)?;
    let ids = extract_identifiers(&traces, &profile, &resolver);
    write_to(a.out.as_deref(), |w| write_identifiers_jsonl(&ids, w))
}

fn run_synth(a: SynthArgs) -> CliResult {
    let params = SynthParams {
        seed: a.seed,
        n_users: a.users,
        n_transactions: a.transactions,
        n_trackers: a.trackers,
        n_publishers: a.publishers,
        plant_syncs: a.plant,
        plant_locations: a
            .locations
            .unwrap_or_else(|| Location::ALL.to_vec())
            .into_iter()
            .map(|l| (l, 1.0))
            .collect(),
        id_length: a.id_length,
        noise: NoiseParams {
            short_values: a.noise_short,
            timestamp_values: a.noise_timestamp,
            multi_value_keys: a.noise_multi_value,
            dynamic_keys: a.noise_dynamic,
            session_cookies: a.noise_session,
            cross_user_values: a.noise_cross_user,
        },
    };
    let (traces, truth) = synth::generate(&params)?;
    write_to(a.out.as_deref(), |w| jsonl::write_traces_jsonl(&traces, w))?;
    if let Some(p) = &a.truth {
        write_to(Some(p), |w| synth::write_truth_jsonl(&truth, w))?;
    }
    Ok(())
}

fn open(path: &Path) -> CliResult<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(BufReader::new(std::io::stdin())));
    }
    File::open(path)
        .map(|f| Box::new(BufReader::new(f)) as Box<dyn BufRead>)
        .map_err(|e| Failure::Ingest(format!("{}: {e}", path.display())))
}

fn run_score(a: ScoreArgs) -> CliResult {
    let detected = detect::read_events_jsonl(open(&a.events)?, &a.events)?;
    let truth = synth::read_truth_jsonl(open(&a.truth)?, &a.truth)?;
    let s = synth::score(&detected, &truth.events);
    if a.json {
        println!("{}", serde_json::to_string(&s).expect("score serializes"));
    } else {
        println!("precision {:.3}", s.precision);
        println!("recall    {:.3}", s.recall);
        println!("tp {} fp {} fn {}", s.true_positives, s.false_positives, s.false_negatives);
    }
    Ok(())
}

fn run_report(a: ReportArgs) -> CliResult {
    let mut cfg = RunConfig::default();
    let events = detect::read_events_jsonl(open(&a.events)?, &a.events)?;
    let traces = load_inputs(&a.input, &mut cfg)?;
    let rules = match resource(a.psl, "public_suffix_list.dat") {
        Some(p) => Arc::new(SuffixRules::load(&p)?),
        None => SuffixRules::bundled(),
    };
    let resolver = EntityResolver::new(crate::model::EntityMode::Etld1, rules, Arc::new(OrgMap::default()));
    let report = aggregate(&events, &traces, &resolver, a.top_k)?;
    let rendered = render(&report, a.report_format);
    write_to(a.out.as_deref(), |w| w.write_all(rendered.as_bytes()))
}
