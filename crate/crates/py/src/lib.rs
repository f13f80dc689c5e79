//! Python bindings for the `synergos` simulation crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::synergos as core;
use core::apartment::{build_apartment, build_cake_variant, ApartmentConfig};
use core::coding::{self, CodingConfig, Edit, Termination};
use core::engine::EngineConfig;
use core::gateway::{Gateway, GenParams, HashEmbedder, Msg, Role, DEFAULT_DIMENSION, DEFAULT_RETRIES};
use core::memory;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(items: &[T]) -> String {
    serde_json::to_string(items).expect("transcript entries serialize")
}

fn role_of(name: &str) -> PyResult<Role> {
    match name {
        "system" => Ok(Role::System),
        "user" => Ok(Role::User),
        "assistant" => Ok(Role::Assistant),
        other => Err(value_err(format!("unknown role {other:?}"))),
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Recency weight of an observation made at `t_obs`, seen at `t_now`.
#[pyfunction]
#[pyo3(signature = (t_now, t_obs, decay = memory::DEFAULT_DECAY))]
fn recency(t_now: u64, t_obs: u64, decay: f64) -> PyResult<f64> {
    memory::recency(t_now, t_obs, decay).map_err(value_err)
}

/// Maps a 1..=10 rating onto [0.1, 1.0].
#[pyfunction]
fn normalize_importance(raw: u8) -> PyResult<f64> {
    memory::normalize_importance(raw).map_err(value_err)
}

/// Unit-length hash embedding of `text`.
#[pyfunction]
#[pyo3(signature = (text, dimension = DEFAULT_DIMENSION, seed = 0))]
fn hash_embed(text: &str, dimension: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut gw = core::ScriptedGateway::new(Vec::<String>::new()).with_embedder(HashEmbedder::new(dimension, seed));
    gw.embed(text).map(|e| e.values().to_vec()).map_err(value_err)
}

/// Truncates a list of (role, content) pairs to `cap` messages, keeping the
/// leading system message.
#[pyfunction]
fn truncate_history(history: Vec<(String, String)>, cap: usize) -> PyResult<Vec<(String, String)>> {
    let mut msgs = history
        .into_iter()
        .map(|(role, content)| Ok(Msg::new(role_of(&role)?, content)))
        .collect::<PyResult<Vec<_>>>()?;
    core::agent::truncate_history(&mut msgs, cap);
    Ok(msgs
        .into_iter()
        .map(|m| (role_name(m.role).to_string(), m.content))
        .collect())
}

/// Extracts `(message, to)` from model output.
#[pyfunction]
fn parse_directed(text: &str) -> PyResult<(String, String)> {
    core::agent::parse_directed(text)
        .map(|d| (d.message, d.to))
        .map_err(value_err)
}

/// Replays canned replies through a three-way chat; returns the transcript
/// as a JSON array.
#[pyfunction]
fn run_trio(responses: Vec<String>, max_turns: usize) -> PyResult<String> {
    let mut gw = core::ScriptedGateway::new(responses);
    let mut roster = core::trio::default_roster();
    let lines =
        core::trio::run_trio_chat(&mut gw, &mut roster, max_turns, DEFAULT_RETRIES, |_| {}).map_err(runtime_err)?;
    Ok(to_json(&lines))
}

/// Replays canned replies through the apartment scenario; returns the turn
/// outcomes as a JSON array.
#[pyfunction]
#[pyo3(signature = (responses, max_rounds, cake = false))]
fn run_apartment(responses: Vec<String>, max_rounds: usize, cake: bool) -> PyResult<String> {
    let mut gw = core::ScriptedGateway::new(responses);
    let config = ApartmentConfig::default();
    let mut sim = if cake {
        build_cake_variant(&config)
    } else {
        build_apartment(&config)
    }
    .map_err(runtime_err)?;
    let engine = EngineConfig {
        max_rounds,
        ..Default::default()
    };
    Ok(to_json(&sim.run_loop(&mut gw, &engine, |_| {})))
}

/// Replays canned replies through the coding room. Returns the final code
/// and the turn transcript as a JSON array.
#[pyfunction]
#[pyo3(signature = (responses, problem, max_rounds, termination = "unanimous"))]
fn run_coding(
    responses: Vec<String>,
    problem: &str,
    max_rounds: usize,
    termination: &str,
) -> PyResult<(String, String)> {
    let termination = match termination {
        "single" => Termination::Single,
        "unanimous" => Termination::Unanimous,
        other => {
            return Err(value_err(format!(
                "termination must be single or unanimous, got {other:?}"
            )))
        }
    };
    let mut gw = core::ScriptedGateway::new(responses);
    let mut roster = core::Roster::from_settings(&core::config::default_coders()).map_err(runtime_err)?;
    let config = CodingConfig {
        max_rounds,
        termination,
        ..Default::default()
    };
    let run = coding::run_coding(&mut gw, &mut roster, problem, &config, |_| {}).map_err(runtime_err)?;
    Ok((run.buffer.render(), to_json(&run.transcript)))
}

/// Deterministic backend serving replies from a list.
#[pyclass(name = "ScriptedGateway", unsendable)]
struct PyScriptedGateway {
    inner: core::ScriptedGateway,
}

#[pymethods]
impl PyScriptedGateway {
    #[new]
    fn new(responses: Vec<String>) -> Self {
        Self {
            inner: core::ScriptedGateway::new(responses),
        }
    }

    #[getter]
    fn remaining(&self) -> usize {
        self.inner.script().remaining()
    }
}

/// A persona with a bounded chat history.
#[pyclass(name = "Agent", unsendable)]
struct PyAgent {
    inner: core::Agent,
}

#[pymethods]
impl PyAgent {
    #[new]
    #[pyo3(signature = (name, persona, temperature = 0.7, history_cap = core::agent::DEFAULT_HISTORY_CAP))]
    fn new(name: &str, persona: &str, temperature: f64, history_cap: usize) -> PyResult<Self> {
        let agent = core::Agent::new(
            core::AgentId(0),
            name,
            persona,
            GenParams::with_temperature(temperature),
            history_cap,
        )
        .map_err(value_err)?;
        Ok(Self { inner: agent })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn history(&self) -> Vec<(String, String)> {
        self.inner
            .history()
            .iter()
            .map(|m| (role_name(m.role).to_string(), m.content.clone()))
            .collect()
    }

    fn respond(&mut self, gateway: &mut PyScriptedGateway, prompt: &str) -> PyResult<String> {
        self.inner.respond(&mut gateway.inner, prompt).map_err(runtime_err)
    }
}

/// Shared source text edited a few lines at a time.
#[pyclass(name = "CodeBuffer")]
#[derive(Default)]
struct PyCodeBuffer {
    inner: coding::CodeBuffer,
}

#[pymethods]
impl PyCodeBuffer {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    /// Applies an edit given as JSON, e.g.
    /// `{"kind": "insert_after", "anchor": 0, "lines": ["x = 1"]}`.
    #[pyo3(signature = (edit, turn = 0, agent = 0, max_lines = coding::DEFAULT_MAX_EDIT_LINES))]
    fn apply(&mut self, edit: &str, turn: u64, agent: u32, max_lines: usize) -> PyResult<()> {
        let edit: Edit = serde_json::from_str(edit).map_err(value_err)?;
        self.inner
            .apply_edit(turn, core::AgentId(agent), edit, max_lines)
            .map_err(value_err)
    }

    #[getter]
    fn lines(&self) -> Vec<String> {
        self.inner.lines().to_vec()
    }

    #[getter]
    fn edit_count(&self) -> usize {
        self.inner.edit_log().len()
    }

    fn render(&self) -> String {
        self.inner.render()
    }
}

#[pymodule]
fn synergos(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(recency, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_importance, m)?)?;
    m.add_function(wrap_pyfunction!(hash_embed, m)?)?;
    m.add_function(wrap_pyfunction!(truncate_history, m)?)?;
    m.add_function(wrap_pyfunction!(parse_directed, m)?)?;
    m.add_function(wrap_pyfunction!(run_trio, m)?)?;
    m.add_function(wrap_pyfunction!(run_apartment, m)?)?;
    m.add_function(wrap_pyfunction!(run_coding, m)?)?;
    m.add_class::<PyScriptedGateway>()?;
    m.add_class::<PyAgent>()?;
    m.add_class::<PyCodeBuffer>()?;
    Ok(())
}
