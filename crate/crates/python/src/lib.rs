//! Python bindings. Records cross the boundary as plain dicts.

use std::path::{Path, PathBuf};

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyList;
use serde::Serialize;

use syncscope::detect::{self, EventRecord, KnownPairs};
use syncscope::entity::EntityResolver;
use syncscope::identifiers::{self, IdentifierRecord};
use syncscope::ingest::{self, IngestOptions, InputFormat, OnError};
use syncscope::model::{Location, SyncEvent, Trace};
use syncscope::profile;
use syncscope::psl::SuffixRules;
use syncscope::report::{self, ReportFormat};
use syncscope::synth::{self, NoiseParams, SynthParams};

create_exception!(syncscope, SyncscopeError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    SyncscopeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn events_to_py<'py>(py: Python<'py>, events: &[SyncEvent]) -> PyResult<Bound<'py, PyList>> {
    let items = events
        .iter()
        .map(|e| to_py(py, &EventRecord::from(e)))
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// Parsed traces, one per user.
#[pyclass(module = "syncscope")]
struct Traces {
    inner: Vec<Trace>,
}

#[pymethods]
impl Traces {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn users(&self) -> Vec<String> {
        self.inner.iter().map(|t| t.user_id.clone()).collect()
    }

    fn transaction_count(&self) -> usize {
        self.inner.iter().map(|t| t.transactions.len()).sum()
    }

    fn to_jsonl(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        ingest::write_traces_jsonl(&self.inner, &mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Traces(users={}, transactions={})", self.inner.len(), self.transaction_count())
    }
}

/// Detection settings.
#[pyclass(module = "syncscope")]
struct Profile {
    inner: profile::Profile,
}

#[pymethods]
impl Profile {
    #[new]
    #[pyo3(signature = (name = "olejnik2014"))]
    fn new(name: &str) -> PyResult<Self> {
        profile::Profile::resolve(name).map(|inner| Profile { inner }).map_err(err)
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        profile::Profile::preset_names().collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn min_len(&self) -> usize {
        self.inner.filter.min_len
    }

    #[setter]
    fn set_min_len(&mut self, n: usize) -> PyResult<()> {
        let mut p = self.inner.clone();
        p.filter.min_len = n;
        p.validate().map_err(err)?;
        self.inner = p;
        Ok(())
    }

    #[getter]
    fn detectors(&self) -> Vec<&'static str> {
        self.inner.detectors.iter().map(|d| d.as_str()).collect()
    }

    #[setter]
    fn set_detectors(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.detectors = names
            .iter()
            .map(|n| n.parse())
            .collect::<Result<_, String>>()
            .map_err(err)?;
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!("Profile({:?})", self.inner.name)
    }
}

/// Events from a detection run, or planted ground truth.
#[pyclass(module = "syncscope")]
struct Events {
    inner: Vec<SyncEvent>,
}

#[pymethods]
impl Events {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_list<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        events_to_py(py, &self.inner)
    }

    fn write_jsonl(&self, path: PathBuf) -> PyResult<()> {
        let file = std::fs::File::create(&path).map_err(err)?;
        detect::write_events_jsonl(&self.inner, std::io::BufWriter::new(file)).map_err(err)
    }

    #[staticmethod]
    fn load_jsonl(path: PathBuf) -> PyResult<Self> {
        detect::load_events_jsonl(&path).map(|inner| Events { inner }).map_err(err)
    }

    /// Aggregate report over these events, rendered as json, csv or text.
    #[pyo3(signature = (traces, format = "text", top_k = 10))]
    fn report(&self, traces: &Traces, format: &str, top_k: usize) -> PyResult<String> {
        let format: ReportFormat = format.parse().map_err(err)?;
        let r = report::aggregate(&self.inner, &traces.inner, &resolver(), top_k).map_err(err)?;
        Ok(report::render(&r, format))
    }

    fn __repr__(&self) -> String {
        format!("Events({})", self.inner.len())
    }
}

fn resolver() -> EntityResolver {
    EntityResolver::bundled(syncscope::model::EntityMode::Etld1)
}

/// Load trace files. The format is inferred from the extension when not
/// given.
#[pyfunction]
#[pyo3(signature = (paths, format = None, on_error = "fail"))]
fn load_traces(paths: Vec<PathBuf>, format: Option<&str>, on_error: &str) -> PyResult<Traces> {
    let format: Option<InputFormat> = format.map(str::parse).transpose().map_err(err)?;
    let opts = IngestOptions {
        on_error: on_error.parse::<OnError>().map_err(err)?,
        user_id: None,
    };
    let mut all = Vec::new();
    for path in &paths {
        let fmt = format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some("har") => InputFormat::Har,
            _ => InputFormat::Jsonl,
        });
        let (traces, _) = ingest::load(path, fmt, &opts).map_err(err)?;
        all.extend(traces);
    }
    Ok(Traces {
        inner: ingest::merge_by_user(all),
    })
}

#[pyfunction]
fn extract_identifiers<'py>(py: Python<'py>, traces: &Traces, profile: &Profile) -> PyResult<Bound<'py, PyList>> {
    let r = resolver().with_mode(profile.inner.entity_mode);
    let ids = identifiers::extract_identifiers(&traces.inner, &profile.inner, &r);
    let items = ids
        .values()
        .flatten()
        .map(|id| to_py(py, &IdentifierRecord::from(id)))
        .collect::<PyResult<Vec<_>>>()?;
    PyList::new(py, items)
}

/// Run the profile's detectors.
#[pyfunction]
#[pyo3(signature = (traces, profile, pairs = None))]
fn detect_syncs(traces: &Traces, profile: &Profile, pairs: Option<PathBuf>) -> PyResult<Events> {
    let r = resolver().with_mode(profile.inner.entity_mode);
    let pairs = pairs.map(KnownPairs::load).transpose().map_err(err)?;
    let ids = identifiers::extract_identifiers(&traces.inner, &profile.inner, &r);
    let d = detect::detect(&traces.inner, &ids, &profile.inner, &r, pairs.as_ref()).map_err(err)?;
    Ok(Events { inner: d.events })
}

/// Synthetic traces with planted syncs. Returns `(traces, truth)`.
#[pyfunction]
#[pyo3(signature = (seed = 1, users = 1, transactions = 100, plant = 0, id_length = 16, noise = 0, locations = None))]
fn generate(
    seed: u64,
    users: usize,
    transactions: usize,
    plant: usize,
    id_length: usize,
    noise: usize,
    locations: Option<Vec<String>>,
) -> PyResult<(Traces, Events)> {
    let locations: Vec<Location> = match locations {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, String>>().map_err(err)?,
        None => Location::ALL.to_vec(),
    };
    let params = SynthParams {
        seed,
        n_users: users,
        n_transactions: transactions,
        plant_syncs: plant,
        plant_locations: locations.into_iter().map(|l| (l, 1.0)).collect(),
        id_length,
        noise: NoiseParams {
            short_values: noise,
            timestamp_values: noise,
            multi_value_keys: noise,
            dynamic_keys: noise,
            session_cookies: noise,
            cross_user_values: noise,
        },
        ..SynthParams::default()
    };
    let (traces, truth) = synth::generate(&params).map_err(err)?;
    Ok((Traces { inner: traces }, Events { inner: truth.events }))
}

#[pyfunction]
fn score<'py>(py: Python<'py>, detected: &Events, truth: &Events) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &synth::score(&detected.inner, &truth.inner))
}

#[pyfunction]
fn similarity(a: &str, b: &str) -> f64 {
    identifiers::ratcliff_obershelp(a, b)
}

#[pyfunction]
#[pyo3(signature = (host, psl = None))]
fn registrable_domain(host: &str, psl: Option<&str>) -> PyResult<Option<String>> {
    let rules = match psl {
        Some(p) => std::sync::Arc::new(SuffixRules::load(Path::new(p)).map_err(err)?),
        None => SuffixRules::bundled(),
    };
    Ok(rules.registrable_domain(host))
}

#[pymodule]
#[pyo3(name = "syncscope")]
fn syncscope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SyncscopeError", m.py().get_type::<SyncscopeError>())?;
    m.add_class::<Traces>()?;
    m.add_class::<Profile>()?;
    m.add_class::<Events>()?;
    m.add_function(wrap_pyfunction!(load_traces, m)?)?;
    m.add_function(wrap_pyfunction!(extract_identifiers, m)?)?;
    m.add_function(wrap_pyfunction!(detect_syncs, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(similarity, m)?)?;
    m.add_function(wrap_pyfunction!(registrable_domain, m)?)?;
    Ok(())
}
