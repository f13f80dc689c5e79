//! Persona-bearing agents with bounded histories.
//!
//! All agents share one model and differ only by their histories. The first
//! history entry is the persona's system message and survives every
//! truncation; after each response the oldest other messages are dropped
//! until the history fits its cap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    self, chat_structured, FieldKind, FieldSpec, Gateway, GatewayError, GenParams, Msg, Role, Structured,
};

pub const DEFAULT_HISTORY_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("an agent named `{0}` is already in the roster")]
    DuplicateName(String),
    #[error("agent name must not be empty")]
    EmptyName,
    #[error("history cap {0} is below the minimum of 2")]
    CapTooSmall(usize),
    #[error("no agent named `{0}`")]
    UnknownTarget(String),
    #[error("roster is empty")]
    EmptyRoster,
    #[error("could not parse a directed message: {0}")]
    NoParse(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl std::fmt::Display for AgentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    id: AgentId,
    name: String,
    persona: String,
    history: Vec<Msg>,
    pub params: GenParams,
    history_cap: usize,
}

impl Agent {
    pub fn new(
        id: AgentId,
        name: impl Into<String>,
        persona: impl Into<String>,
        params: GenParams,
        history_cap: usize,
    ) -> Result<Self, AgentError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(AgentError::EmptyName);
        }
        if history_cap < 2 {
            return Err(AgentError::CapTooSmall(history_cap));
        }
        let persona = persona.into();
        Ok(Self {
            id,
            name,
            history: vec![Msg::system(persona.clone())],
            persona,
            params,
            history_cap,
        })
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn persona(&self) -> &str {
        &self.persona
    }

    pub fn history(&self) -> &[Msg] {
        &self.history
    }

    pub fn history_cap(&self) -> usize {
        self.history_cap
    }

    /// Appends `prompt`, asks the model, appends the reply, then truncates.
    ///
    /// On failure the prompt stays in the history and no reply is added.
    pub fn respond(&mut self, gateway: &mut dyn Gateway, prompt: &str) -> Result<String, AgentError> {
        self.history.push(Msg::user(prompt));
        let result = gateway.chat(&self.history, &self.params);
        if let Ok(reply) = &result {
            self.history.push(Msg::assistant(reply.clone()));
        }
        self.truncate();
        Ok(result?)
    }

    /// Like [`respond`](Self::respond) but demands a JSON reply matching
    /// `schema`. Corrective re-prompts are not kept in the history; only the
    /// prompt and the accepted reply are.
    pub fn respond_structured(
        &mut self,
        gateway: &mut dyn Gateway,
        prompt: &str,
        schema: &[FieldSpec],
        retries: u32,
    ) -> Result<Structured, AgentError> {
        self.history.push(Msg::user(prompt));
        let result = chat_structured(gateway, &self.history, schema, &self.params, retries);
        if let Ok(out) = &result {
            self.history.push(Msg::assistant(out.raw.clone()));
        }
        self.truncate();
        Ok(result?)
    }

    /// One-off question against the current history. The history is left
    /// untouched.
    pub fn ask(&self, gateway: &mut dyn Gateway, prompt: &str) -> Result<String, AgentError> {
        let mut convo = self.history.clone();
        convo.push(Msg::user(prompt));
        Ok(gateway.chat(&convo, &self.params)?)
    }

    pub fn truncate(&mut self) {
        truncate_history(&mut self.history, self.history_cap);
    }
}

/// Keeps the leading system message plus the newest `cap - 1` messages.
pub fn truncate_history(history: &mut Vec<Msg>, cap: usize) {
    let cap = cap.max(1);
    if history.len() <= cap {
        return;
    }
    let keep_from = if history.first().map(|m| m.role) == Some(Role::System) {
        1
    } else {
        0
    };
    let excess = history.len() - cap;
    history.drain(keep_from..keep_from + excess);
}

/// What is needed to create an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSettings {
    pub name: String,
    pub persona: String,
    pub params: GenParams,
    pub history_cap: usize,
}

impl AgentSettings {
    pub fn new(name: &str, persona: &str, temperature: f64) -> Self {
        Self {
            name: name.to_string(),
            persona: persona.to_string(),
            params: GenParams::with_temperature(temperature),
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }
}

/// An ordered set of uniquely named agents.
#[derive(Debug, Clone, Default)]
pub struct Roster {
    agents: Vec<Agent>,
}

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        persona: impl Into<String>,
        params: GenParams,
        history_cap: usize,
    ) -> Result<AgentId, AgentError> {
        let name = name.into();
        if self.by_name(&name).is_some() {
            return Err(AgentError::DuplicateName(name));
        }
        let id = AgentId(self.agents.len() as u32);
        self.agents.push(Agent::new(id, name, persona, params, history_cap)?);
        Ok(id)
    }

    pub fn from_settings(settings: &[AgentSettings]) -> Result<Self, AgentError> {
        let mut roster = Self::new();
        for s in settings {
            roster.add(s.name.clone(), s.persona.clone(), s.params.clone(), s.history_cap)?;
        }
        Ok(roster)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter()
    }

    pub fn ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(Agent::id).collect()
    }

    pub fn get(&self, id: AgentId) -> Option<&Agent> {
        self.agents.get(id.0 as usize)
    }

    pub fn get_mut(&mut self, id: AgentId) -> Option<&mut Agent> {
        self.agents.get_mut(id.0 as usize)
    }

    pub fn by_name(&self, name: &str) -> Option<&Agent> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn position(&self, id: AgentId) -> Option<usize> {
        self.agents.iter().position(|a| a.id == id)
    }

    pub fn at(&self, index: usize) -> Option<&Agent> {
        self.agents.get(index)
    }

    /// Two distinct agents borrowed mutably at once.
    pub fn pair_mut(&mut self, a: AgentId, b: AgentId) -> Option<(&mut Agent, &mut Agent)> {
        let (i, j) = (a.0 as usize, b.0 as usize);
        if i == j || i >= self.agents.len() || j >= self.agents.len() {
            return None;
        }
        if i < j {
            let (lo, hi) = self.agents.split_at_mut(j);
            Some((&mut lo[i], &mut hi[0]))
        } else {
            let (lo, hi) = self.agents.split_at_mut(i);
            Some((&mut hi[0], &mut lo[j]))
        }
    }
}

/// A message addressed to one roster member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedMessage {
    pub message: String,
    pub to: String,
}

impl DirectedMessage {
    pub fn schema() -> Vec<FieldSpec> {
        vec![
            FieldSpec::required("message", FieldKind::Text),
            FieldSpec::required("to", FieldKind::Text),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("two string fields always serialize")
    }

    fn from_fields(fields: &serde_json::Map<String, serde_json::Value>) -> Self {
        Self {
            message: fields["message"].as_str().unwrap_or_default().to_string(),
            to: fields["to"].as_str().unwrap_or_default().to_string(),
        }
    }
}

impl From<&Structured> for DirectedMessage {
    fn from(s: &Structured) -> Self {
        Self::from_fields(&s.fields)
    }
}

/// Finds the first `{"message": .., "to": ..}` object in model output,
/// ignoring surrounding prose.
pub fn parse_directed(text: &str) -> Result<DirectedMessage, AgentError> {
    gateway::parse_structured(text, &DirectedMessage::schema())
        .map(|fields| DirectedMessage::from_fields(&fields))
        .map_err(AgentError::NoParse)
}

/// Whoever received the last message speaks next. Names match exactly.
pub fn next_speaker(roster: &Roster, last: &DirectedMessage) -> Result<AgentId, AgentError> {
    if roster.is_empty() {
        return Err(AgentError::EmptyRoster);
    }
    roster
        .by_name(&last.to)
        .map(Agent::id)
        .ok_or_else(|| AgentError::UnknownTarget(last.to.clone()))
}
