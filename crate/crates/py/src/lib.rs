//! Python bindings for the relay simulator.

// pyo3 0.22 macro expansion trips this lint
#![allow(clippy::useless_conversion)]

use std::io::Cursor;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand_core::SeedableRng;
use serde::Serialize;

use qkdrelay::audit::{self, Attacker};
use qkdrelay::cryptoseal::{KemParamSet, ProviderKind};
use qkdrelay::keycore::{self, KeyRegister};
use qkdrelay::netharness::{self, RunPlan, SessionTrigger, Topology};
use qkdrelay::relay::{self, SessionTranscript, Variant};
use qkdrelay::SimRng;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: ToString,
{
    s.parse::<T>().map_err(value_err)
}

/// Converts a serializable value into plain Python objects by way of JSON.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import_bound("json")?.call_method1("loads", (text,))?.unbind())
}

fn read_transcripts(jsonl: &str) -> PyResult<Vec<SessionTranscript>> {
    SessionTranscript::read_jsonl(Cursor::new(jsonl.as_bytes())).map_err(value_err)
}

#[pyclass(name = "KeyRegister", module = "qkdrelay", frozen, eq)]
#[derive(Clone, PartialEq)]
struct PyKeyRegister(KeyRegister);

#[pymethods]
impl PyKeyRegister {
    #[new]
    #[pyo3(signature = (data, len_bits=None))]
    fn new(data: &[u8], len_bits: Option<usize>) -> PyResult<Self> {
        let len = len_bits.unwrap_or(data.len() * 8);
        KeyRegister::from_bytes(data, len).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn from_bits(bits: &str) -> PyResult<Self> {
        KeyRegister::from_bit_str(bits).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn zeros(len_bits: usize) -> Self {
        Self(KeyRegister::zeros(len_bits))
    }

    #[staticmethod]
    fn random(len_bits: usize, seed: u64) -> Self {
        Self(keycore::random_register(len_bits, &mut SimRng::seed_from_u64(seed)))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }

    fn __xor__(&self, other: &Self) -> PyResult<Self> {
        self.xor(other)
    }

    fn xor(&self, other: &Self) -> PyResult<Self> {
        self.0.xor(&other.0).map(Self).map_err(value_err)
    }

    fn truncate(&self, len_bits: usize) -> PyResult<Self> {
        self.0.truncate(len_bits).map(Self).map_err(value_err)
    }

    fn pad(&self, block_bits: usize) -> PyResult<Self> {
        self.0.pad(block_bits).map(Self).map_err(value_err)
    }

    fn unpad(&self, original_len: usize, block_bits: usize) -> PyResult<Self> {
        self.0.unpad(original_len, block_bits).map(Self).map_err(value_err)
    }

    fn to_bits(&self) -> String {
        self.0.to_bit_string()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new_bound(py, self.0.as_bytes())
    }
}

#[pyfunction]
fn eta_direct_kem(params: &str) -> PyResult<f64> {
    Ok(audit::eta_direct_kem(&parse::<KemParamSet>(params)?))
}

#[pyfunction]
fn eta_kem_then_aes(l: usize) -> f64 {
    audit::eta_kem_then_aes(l)
}

#[pyfunction]
fn final_rate(r_ac: f64, r_bc: f64, eta: f64) -> PyResult<f64> {
    audit::final_rate(r_ac, r_bc, eta).map_err(value_err)
}

/// Efficiency table rows as dicts.
#[pyfunction]
#[pyo3(signature = (params=None))]
fn eta_table(py: Python<'_>, params: Option<Vec<String>>) -> PyResult<PyObject> {
    let sets = match params {
        None => KemParamSet::builtin().to_vec(),
        Some(names) => names.iter().map(|n| parse(n)).collect::<PyResult<_>>()?,
    };
    to_py(py, &audit::table_one(&sets))
}

/// Negotiated final key length, or `ValueError` carrying the abort code.
#[pyfunction]
fn negotiate_length(l_ac: usize, l_bc: usize) -> PyResult<usize> {
    relay::negotiate_length(l_ac, l_bc).map_err(|r| value_err(r.code()))
}

#[pyclass(name = "Topology", module = "qkdrelay", frozen)]
struct PyTopology(Topology);

#[pymethods]
impl PyTopology {
    #[staticmethod]
    fn paris() -> Self {
        Self(netharness::paris())
    }

    #[staticmethod]
    fn load(text: &str) -> PyResult<Self> {
        netharness::load_topology(text).map(Self).map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.0.nodes.iter().map(|n| n.node_id.clone()).collect()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.0)
    }
}

#[allow(clippy::too_many_arguments)]
fn plan(
    variant: &str,
    path: Vec<String>,
    duration_s: f64,
    seed: u64,
    kem_params: &str,
    provider: &str,
    l_target: usize,
    transcripts: bool,
) -> PyResult<RunPlan> {
    let path: Vec<&str> = path.iter().map(String::as_str).collect();
    let mut plan = RunPlan::new(parse::<Variant>(variant)?, &path, duration_s);
    plan.seed = seed;
    plan.kem_params = parse(kem_params)?;
    plan.provider = parse::<ProviderKind>(provider)?;
    plan.trigger = SessionTrigger::OnKeyAvailable { l_target };
    plan.capture_transcripts = transcripts;
    Ok(plan)
}

/// Outcome of one relay session.
#[pyclass(name = "Session", module = "qkdrelay", frozen)]
struct PySession {
    #[pyo3(get)]
    completed: bool,
    #[pyo3(get)]
    length: usize,
    #[pyo3(get)]
    waited_ticks: u64,
    #[pyo3(get)]
    alice_key: Option<PyKeyRegister>,
    #[pyo3(get)]
    bob_key: Option<PyKeyRegister>,
    #[pyo3(get)]
    transcript: String,
    report: relay::SessionReport,
}

#[pymethods]
impl PySession {
    fn report(&self, py: Python<'_>) -> PyResult<PyObject> {
        to_py(py, &self.report)
    }
}

/// Runs one session once the path holds enough key.
#[pyfunction]
#[pyo3(signature = (topology, variant="pqc-secured", path=None, seed=0, kem_params="kem-512", provider="standard", l_target=netharness::DEFAULT_L_TARGET, max_wait_s=3600.0))]
#[allow(clippy::too_many_arguments)]
fn run_session(
    topology: &PyTopology,
    variant: &str,
    path: Option<Vec<String>>,
    seed: u64,
    kem_params: &str,
    provider: &str,
    l_target: usize,
    max_wait_s: f64,
) -> PyResult<PySession> {
    let path = path.unwrap_or_else(|| topology.nodes());
    let plan = plan(variant, path, max_wait_s, seed, kem_params, provider, l_target, false)?;
    let shot = netharness::run_session(&topology.0, &plan).map_err(value_err)?;
    let mut transcript = Vec::new();
    shot.outcome
        .transcript
        .write_jsonl(&mut transcript)
        .map_err(value_err)?;
    let session = &shot.outcome.session;
    Ok(PySession {
        completed: shot.outcome.completed(),
        length: session.l,
        waited_ticks: shot.waited_ticks,
        alice_key: session.alice_key.clone().map(PyKeyRegister),
        bob_key: session.bob_key.clone().map(PyKeyRegister),
        transcript: String::from_utf8(transcript).map_err(value_err)?,
        report: shot.report,
    })
}

/// Runs sessions continuously and returns the run statistics as a dict.
#[pyfunction]
#[pyo3(signature = (topology, duration_s, variant="pqc-secured", path=None, seed=0, kem_params="kem-512", provider="standard", l_target=netharness::DEFAULT_L_TARGET))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    topology: &PyTopology,
    duration_s: f64,
    variant: &str,
    path: Option<Vec<String>>,
    seed: u64,
    kem_params: &str,
    provider: &str,
    l_target: usize,
) -> PyResult<PyObject> {
    let path = path.unwrap_or_else(|| topology.nodes());
    let plan = plan(variant, path, duration_s, seed, kem_params, provider, l_target, false)?;
    let summary = py
        .allow_threads(|| netharness::run_continuous(&topology.0, &plan))
        .map_err(value_err)?;
    to_py(py, &summary.stats)
}

/// What the middle node derives from each transcript: `(register, is_final_key)`.
#[pyfunction]
fn reconstruct_as_charlie(transcript: &str) -> PyResult<Vec<(PyKeyRegister, bool)>> {
    read_transcripts(transcript)?
        .iter()
        .map(|t| {
            let rec = audit::reconstruct_as_charlie(&audit::charlie_view(t)).map_err(value_err)?;
            Ok((PyKeyRegister(rec.derived), rec.is_final_key))
        })
        .collect()
}

/// Audit reports for each transcript, from Charlie's or Eve's position.
#[pyfunction]
#[pyo3(signature = (transcript, attacker="charlie", compromised=Vec::new()))]
fn audit_transcripts(py: Python<'_>, transcript: &str, attacker: &str, compromised: Vec<String>) -> PyResult<PyObject> {
    let attacker = parse::<Attacker>(attacker)?;
    let compromised: Vec<&str> = compromised.iter().map(String::as_str).collect();
    let reports: Vec<_> = read_transcripts(transcript)?
        .iter()
        .map(|t| audit::audit_transcript(t, attacker, &compromised))
        .collect();
    to_py(py, &reports)
}

#[pymodule]
#[pyo3(name = "qkdrelay")]
pub fn qkdrelay_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKeyRegister>()?;
    m.add_class::<PyTopology>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(eta_direct_kem, m)?)?;
    m.add_function(wrap_pyfunction!(eta_kem_then_aes, m)?)?;
    m.add_function(wrap_pyfunction!(final_rate, m)?)?;
    m.add_function(wrap_pyfunction!(eta_table, m)?)?;
    m.add_function(wrap_pyfunction!(negotiate_length, m)?)?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_as_charlie, m)?)?;
    m.add_function(wrap_pyfunction!(audit_transcripts, m)?)?;
    Ok(())
}
