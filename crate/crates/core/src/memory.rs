//! Long-term observation memory.
//!
//! After every action an agent records a short observation. Each one is
//! stamped with the turn it happened on, rated for importance by a separate
//! rater conversation, and embedded. Before the next action the agent
//! writes a query, and the stored observations are ranked by
//!
//! ```text
//! score = exp(-decay * (t_now - t_obs)) + importance + query · embedding
//! ```
//!
//! with importance mapped from a 1..=10 rating onto [0.1, 1]. The top `k`
//! are injected into the agent's next prompt.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentId};
use crate::gateway::{Embedding, Gateway, GatewayError, GenParams, Msg};

pub const DEFAULT_DECAY: f64 = 0.03;
pub const DEFAULT_K: usize = 5;
/// Rating used when the rater never produces a usable number.
pub const FALLBACK_RATING: u8 = 5;

const RATER_PROMPT: &str = "You rate how important observations are. On a scale of 1 to 10, where 1 is \
completely mundane (like brushing teeth) and 10 is extremely significant (like a major decision or \
discovery), rate the observation you are given. Reply with a single integer.";

const QUERY_PROMPT: &str = "Before you act, write one short question describing what you need to remember \
about your situation right now. Reply with only the question.";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("current turn {now} precedes observation turn {then}")]
    ClockReversed { now: u64, then: u64 },
    #[error("importance rating {0} outside 1..=10")]
    ImportanceOutOfRange(i64),
    #[error("embedding dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("observation text is empty")]
    EmptyText,
    #[error("invalid retrieval parameters: {0}")]
    InvalidParams(String),
    #[error("malformed memory dump at line {line}: {reason}")]
    BadDump { line: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreWeights {
    pub recency: f64,
    pub importance: f64,
    pub relevance: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            recency: 1.0,
            importance: 1.0,
            relevance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalParams {
    pub decay: f64,
    pub k: usize,
    pub weights: ScoreWeights,
    pub rater_params: GenParams,
    pub rater_retries: u32,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            decay: DEFAULT_DECAY,
            k: DEFAULT_K,
            weights: ScoreWeights::default(),
            rater_params: GenParams::with_temperature(0.0),
            rater_retries: crate::gateway::DEFAULT_RETRIES,
        }
    }
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<(), MemoryError> {
        if !(self.decay.is_finite() && self.decay > 0.0) {
            return Err(MemoryError::InvalidParams(format!(
                "decay must be positive, got {}",
                self.decay
            )));
        }
        if self.k == 0 {
            return Err(MemoryError::InvalidParams("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub text: String,
    pub turn: u64,
    pub importance_raw: u8,
    pub importance: f64,
    pub embedding: Embedding,
}

impl Observation {
    pub fn new(
        text: impl Into<String>,
        turn: u64,
        importance_raw: u8,
        embedding: Embedding,
    ) -> Result<Self, MemoryError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        Ok(Self {
            importance: normalize_importance(importance_raw)?,
            text,
            turn,
            importance_raw,
            embedding,
        })
    }
}

/// `exp(-decay * (t_a - t_b))` for an observation made at turn `t_b` seen
/// from turn `t_a`.
pub fn recency(t_a: u64, t_b: u64, decay: f64) -> Result<f64, MemoryError> {
    if t_a < t_b {
        return Err(MemoryError::ClockReversed { now: t_a, then: t_b });
    }
    Ok((-decay * (t_a - t_b) as f64).exp())
}

/// Maps a 1..=10 rating linearly onto [0.1, 1.0].
pub fn normalize_importance(raw: u8) -> Result<f64, MemoryError> {
    if !(1..=10).contains(&raw) {
        return Err(MemoryError::ImportanceOutOfRange(raw.into()));
    }
    Ok(f64::from(raw) / 10.0)
}

pub fn relevance(query: &Embedding, obs: &Embedding) -> Result<f64, MemoryError> {
    query.dot(obs).ok_or(MemoryError::DimensionMismatch {
        expected: query.dimension(),
        got: obs.dimension(),
    })
}

pub fn retrieval_score(
    obs: &Observation,
    query: &Embedding,
    t_a: u64,
    params: &RetrievalParams,
) -> Result<f64, MemoryError> {
    let w = params.weights;
    Ok(w.recency * recency(t_a, obs.turn, params.decay)?
        + w.importance * obs.importance
        + w.relevance * relevance(query, &obs.embedding)?)
}

/// First integer in 1..=10 appearing in `reply`, e.g. 9 for "I'd say 9/10".
pub fn parse_rating(reply: &str) -> Option<u8> {
    reply
        .split(|c: char| !c.is_ascii_digit())
        .filter(|run| !run.is_empty())
        .filter_map(|run| run.parse::<u64>().ok())
        .find(|n| (1..=10).contains(n))
        .map(|n| n as u8)
}

/// Asks a dedicated rater conversation (never an agent's history) how
/// important `text` is. Falls back to [`FALLBACK_RATING`] with a warning
/// when no usable rating arrives within the retry budget.
pub fn rate_importance(gateway: &mut dyn Gateway, text: &str, params: &RetrievalParams) -> Result<u8, MemoryError> {
    if text.trim().is_empty() {
        return Err(MemoryError::EmptyText);
    }
    let mut convo = vec![Msg::system(RATER_PROMPT), Msg::user(format!("Observation: {text}"))];
    for _ in 0..=params.rater_retries {
        match gateway.chat(&convo, &params.rater_params) {
            Ok(reply) => {
                if let Some(rating) = parse_rating(&reply) {
                    return Ok(rating);
                }
                convo.push(Msg::assistant(reply));
                convo.push(Msg::user("Reply with only a single integer from 1 to 10."));
            }
            Err(e) => {
                log::warn!("importance rater failed: {e}");
                break;
            }
        }
    }
    log::warn!("no usable importance rating for {text:?}; using {FALLBACK_RATING}");
    Ok(FALLBACK_RATING)
}

/// Has the agent phrase what it wants to recall. Uses a throwaway copy of
/// the history; on failure returns an empty query so retrieval is skipped.
pub fn generate_query(agent: &Agent, gateway: &mut dyn Gateway) -> String {
    match agent.ask(gateway, QUERY_PROMPT) {
        Ok(reply) => reply
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .unwrap_or_default()
            .to_string(),
        Err(e) => {
            log::warn!("query generation for {} failed, skipping retrieval: {e}", agent.name());
            String::new()
        }
    }
}

/// Indices and scores of the best `k` observations, best first. Ties go to
/// the later turn, then to the earlier insertion.
pub fn rank(
    observations: &[Observation],
    query: &Embedding,
    t_a: u64,
    params: &RetrievalParams,
) -> Result<Vec<(usize, f64)>, MemoryError> {
    params.validate()?;
    let mut scored = observations
        .iter()
        .enumerate()
        .map(|(i, obs)| retrieval_score(obs, query, t_a, params).map(|s| (i, s)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|(i, a), (j, b)| {
        b.total_cmp(a)
            .then_with(|| observations[*j].turn.cmp(&observations[*i].turn))
            .then_with(|| i.cmp(j))
    });
    scored.truncate(params.k);
    Ok(scored)
}

/// Per-agent append-only observation lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    entries: BTreeMap<AgentId, Vec<Observation>>,
    dimension: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpRecord {
    agent_id: AgentId,
    text: String,
    turn: u64,
    importance_raw: u8,
    embedding: Vec<f64>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observations(&self, agent: AgentId) -> &[Observation] {
        self.entries.get(&agent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dimension(&self) -> Option<usize> {
        self.dimension
    }

    /// Appends an observation, enforcing turn order and a single embedding
    /// dimension across the store.
    pub fn insert(&mut self, agent: AgentId, obs: Observation) -> Result<(), MemoryError> {
        normalize_importance(obs.importance_raw)?;
        if let Some(expected) = self.dimension {
            if obs.embedding.dimension() != expected {
                return Err(MemoryError::DimensionMismatch {
                    expected,
                    got: obs.embedding.dimension(),
                });
            }
        }
        let list = self.entries.entry(agent).or_default();
        if let Some(last) = list.last() {
            if obs.turn < last.turn {
                return Err(MemoryError::ClockReversed {
                    now: obs.turn,
                    then: last.turn,
                });
            }
        }
        self.dimension = Some(obs.embedding.dimension());
        list.push(obs);
        Ok(())
    }

    /// Rates, embeds and stores a new observation made at `t_now`.
    pub fn record(
        &mut self,
        gateway: &mut dyn Gateway,
        agent: AgentId,
        text: &str,
        t_now: u64,
        params: &RetrievalParams,
    ) -> Result<Observation, MemoryError> {
        if text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        if let Some(last) = self.observations(agent).last() {
            if t_now < last.turn {
                return Err(MemoryError::ClockReversed {
                    now: t_now,
                    then: last.turn,
                });
            }
        }
        let rating = rate_importance(gateway, text, params)?;
        let embedding = gateway.embed(text)?;
        let obs = Observation::new(text, t_now, rating, embedding)?;
        self.insert(agent, obs.clone())?;
        Ok(obs)
    }

    /// The agent's top-k observations for `query_text` at turn `t_a`.
    /// Empty queries, failed embeddings and empty stores all yield nothing.
    pub fn retrieve(
        &self,
        gateway: &mut dyn Gateway,
        agent: AgentId,
        query_text: &str,
        t_a: u64,
        params: &RetrievalParams,
    ) -> Vec<Observation> {
        let observations = self.observations(agent);
        if observations.is_empty() || query_text.trim().is_empty() {
            return Vec::new();
        }
        let query = match gateway.embed(query_text) {
            Ok(q) => q,
            Err(e) => {
                log::warn!("could not embed retrieval query: {e}");
                return Vec::new();
            }
        };
        match rank(observations, &query, t_a, params) {
            Ok(ranked) => ranked.into_iter().map(|(i, _)| observations[i].clone()).collect(),
            Err(e) => {
                log::warn!("retrieval skipped: {e}");
                Vec::new()
            }
        }
    }

    /// Writes one JSON object per observation, agents in id order.
    pub fn dump(&self, path: &Path) -> Result<(), MemoryError> {
        let mut out = BufWriter::new(File::create(path)?);
        for (agent, list) in &self.entries {
            for obs in list {
                let record = DumpRecord {
                    agent_id: *agent,
                    text: obs.text.clone(),
                    turn: obs.turn,
                    importance_raw: obs.importance_raw,
                    embedding: obs.embedding.values().to_vec(),
                };
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&record).expect("plain record serializes")
                )?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let mut store = Self::new();
        for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| MemoryError::BadDump { line: n + 1, reason };
            let record: DumpRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let obs = Observation::new(
                record.text,
                record.turn,
                record.importance_raw,
                Embedding::from_raw(record.embedding),
            )
            .map_err(|e| bad(e.to_string()))?;
            store.insert(record.agent_id, obs).map_err(|e| bad(e.to_string()))?;
        }
        Ok(store)
    }
}

/// Numbered block of observations for injection into a prompt.
pub fn render_observations(observations: &[Observation]) -> String {
    if observations.is_empty() {
        return String::new();
    }
    let mut out = String::from("Here are some important observations about your situation:\n");
    for (i, obs) in observations.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, obs.text));
    }
    out
}
