//! The moderated event loop.
//!
//! Each agent turn runs the same sequence:
//!
//! 1. the agent writes a retrieval query and its top observations are pulled
//!    from memory;
//! 2. the agent asks the moderator a question;
//! 3. the moderator answers from a summary of the world and the actions most
//!    relevant to the question, followed by a fixed instruction block listing
//!    the only legal actions and the reply format;
//! 4. the agent picks one action as JSON, which is validated and applied;
//! 5. the agent states an observation, which is rated and stored;
//! 6. the clock advances.
//!
//! Failures at any stage are recorded in the turn's [`TurnOutcome`] and the
//! loop carries on. The world only changes through validated actions.

mod actions;
mod world;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use actions::{
    apply, render_actions, select_actions, validate, ActionCall, ActionEffect, ActionRegistry, ActionSpec, Applied,
    Guard, Handler, ParamSpec, ValidationError,
};
pub use world::{Scalar, ScalarKind, TurnClock, World, WorldObject};

use crate::agent::{Agent, AgentError, AgentId, Roster};
use crate::gateway::{FieldKind, FieldSpec, Gateway};
use crate::memory::{self, MemoryStore, Observation, RetrievalParams};

pub const DEFAULT_ACTION_SUBSET: usize = 4;
pub const DEFAULT_MODERATOR_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_AGENT_TEMPERATURE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub max_rounds: usize,
    /// How many actions the moderator offers per turn.
    pub action_subset: usize,
    pub action_retries: u32,
    pub retrieval: RetrievalParams,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_rounds: 12,
            action_subset: DEFAULT_ACTION_SUBSET,
            action_retries: crate::gateway::DEFAULT_RETRIES,
            retrieval: RetrievalParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Validation {
    Ok,
    Error(String),
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        matches!(self, Validation::Ok)
    }
}

/// Everything that happened during one agent's turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub turn: u64,
    pub agent_id: AgentId,
    pub agent: String,
    pub query: String,
    pub retrieved: Vec<String>,
    pub question: String,
    pub moderator_answer: String,
    pub offered_actions: Vec<String>,
    pub call: Option<ActionCall>,
    pub validation: Validation,
    /// True when the action took effect.
    pub success: bool,
    pub effect: String,
    pub observation_text: String,
    /// Stage failures the loop recovered from.
    pub failures: Vec<String>,
}

impl TurnOutcome {
    fn new(turn: u64, agent: &Agent) -> Self {
        Self {
            turn,
            agent_id: agent.id(),
            agent: agent.name().to_string(),
            query: String::new(),
            retrieved: Vec::new(),
            question: String::new(),
            moderator_answer: String::new(),
            offered_actions: Vec::new(),
            call: None,
            validation: Validation::Error("turn did not reach action selection".into()),
            success: false,
            effect: String::new(),
            observation_text: String::new(),
            failures: Vec::new(),
        }
    }

    /// Readable rendering for the plain-text log.
    pub fn render(&self) -> String {
        let mut out = format!("[turn {}] {}\n", self.turn, self.agent);
        if !self.question.is_empty() {
            out.push_str(&format!("  {} asks: {}\n", self.agent, self.question));
        }
        if !self.moderator_answer.is_empty() {
            let first = self.moderator_answer.lines().next().unwrap_or_default();
            out.push_str(&format!("  MODERATOR RESPONSE {}: {}\n", self.agent, first));
        }
        match (&self.call, &self.validation) {
            (Some(call), Validation::Ok) => out.push_str(&format!("  action: {call}\n")),
            (Some(call), Validation::Error(e)) => out.push_str(&format!("  action: {call} (invalid: {e})\n")),
            (None, Validation::Error(e)) => out.push_str(&format!("  no action: {e}\n")),
            (None, Validation::Ok) => {}
        }
        if !self.effect.is_empty() {
            out.push_str(&format!("  effect: {}\n", self.effect));
        }
        if !self.observation_text.is_empty() {
            out.push_str(&format!("  observation: {}\n", self.observation_text));
        }
        for failure in &self.failures {
            out.push_str(&format!("  ! {failure}\n"));
        }
        out
    }
}

/// Environment summary: objects, injected observations, offered actions.
pub fn summarize(world: &World, agent: &Agent, memory_context: &[Observation], actions: &[&ActionSpec]) -> String {
    let mut out = String::new();
    if world.is_empty() {
        out.push_str("There are no objects in the environment.\n");
    } else {
        out.push_str(&format!("Objects in {}'s environment:\n", agent.name()));
        out.push_str(&world.render());
    }
    let observations = memory::render_observations(memory_context);
    if !observations.is_empty() {
        out.push('\n');
        out.push_str(&observations);
    }
    out.push('\n');
    if actions.is_empty() {
        out.push_str("No actions are available.\n");
    } else {
        out.push_str(&format!("Actions available to {}:\n", agent.name()));
        out.push_str(&render_actions(actions));
    }
    out
}

fn action_schema() -> Vec<FieldSpec> {
    vec![
        FieldSpec::required("action", FieldKind::Any),
        FieldSpec::optional("args", FieldKind::Array),
    ]
}

fn instruction_block(actions: &[&ActionSpec]) -> String {
    format!(
        "You may only interact with the environment through these actions:\n{}\
         Do not invent objects or actions that are not listed. Take exactly one action. \
         Respond with only a JSON object of the form {{\"action\": \"<action name>\", \"args\": [<arguments in order>]}}.",
        render_actions(actions)
    )
}

/// Reads an action call out of a structured reply, rejecting attempts to
/// take several actions at once.
pub fn parse_action_call(fields: &serde_json::Map<String, Value>, raw: &str) -> Result<ActionCall, ValidationError> {
    let action_objects = crate::json::objects_in(raw)
        .iter()
        .filter(|o| o.contains_key("action"))
        .count();
    if action_objects > 1 {
        return Err(ValidationError::MultipleActions);
    }
    let name = match &fields["action"] {
        Value::String(s) => s.clone(),
        Value::Array(items) if items.len() == 1 && items[0].is_string() => {
            items[0].as_str().unwrap_or_default().to_string()
        }
        Value::Array(items) if items.len() > 1 => return Err(ValidationError::MultipleActions),
        other => {
            return Err(ValidationError::Unparseable(format!(
                "action should be a name, got {other}"
            )))
        }
    };
    let args = match &fields["args"] {
        Value::Null => Vec::new(),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                Scalar::from_json(v)
                    .ok_or_else(|| ValidationError::Unparseable(format!("argument {v} is not a scalar")))
            })
            .collect::<Result<_, _>>()?,
        other => {
            return Err(ValidationError::Unparseable(format!(
                "args should be a list, got {other}"
            )))
        }
    };
    Ok(ActionCall { name, args })
}

#[derive(Debug, thiserror::Error)]
pub enum SpeakError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("{to} could not reply: {source}")]
    NoReply { to: String, source: AgentError },
}

/// Agents, moderator, world and memory of one running scenario.
pub struct Simulation {
    pub roster: Roster,
    pub moderator: Agent,
    pub world: World,
    pub registry: ActionRegistry,
    pub memory: MemoryStore,
    pub clock: TurnClock,
}

impl Simulation {
    pub fn new(roster: Roster, moderator: Agent, world: World, registry: ActionRegistry) -> Self {
        Self {
            roster,
            moderator,
            world,
            registry,
            memory: MemoryStore::new(),
            clock: TurnClock::default(),
        }
    }

    /// Delivers `text` from one agent to another, who replies immediately.
    pub fn speak(
        &mut self,
        gateway: &mut dyn Gateway,
        from: AgentId,
        to_name: &str,
        text: &str,
    ) -> Result<String, SpeakError> {
        let to = self
            .roster
            .by_name(to_name)
            .map(Agent::id)
            .ok_or_else(|| ValidationError::UnknownRecipient(to_name.to_string()))?;
        if to == from {
            return Err(ValidationError::SelfAddressed.into());
        }
        let (sender, recipient) = self
            .roster
            .pair_mut(from, to)
            .ok_or_else(|| ValidationError::UnknownRecipient(to_name.to_string()))?;
        let prompt = format!(
            "{} says to you (via the moderator): \"{}\"\nReply to {} directly in a few sentences.",
            sender.name(),
            text,
            sender.name()
        );
        recipient
            .respond(gateway, &prompt)
            .map_err(|source| SpeakError::NoReply {
                to: to_name.to_string(),
                source,
            })
    }

    /// One full mediated turn for `agent_id`. Never fails; problems are
    /// captured in the outcome.
    pub fn run_turn(&mut self, gateway: &mut dyn Gateway, agent_id: AgentId, config: &EngineConfig) -> TurnOutcome {
        let t = self.clock.now();
        let mut outcome = {
            let agent = self.roster.get(agent_id).expect("turn for an agent outside the roster");
            TurnOutcome::new(t, agent)
        };
        self.mediate(gateway, agent_id, config, &mut outcome);
        self.observe(gateway, agent_id, config, &mut outcome);
        self.clock.advance();
        outcome
    }

    fn mediate(
        &mut self,
        gateway: &mut dyn Gateway,
        agent_id: AgentId,
        config: &EngineConfig,
        outcome: &mut TurnOutcome,
    ) {
        let t = outcome.turn;
        let name = outcome.agent.clone();

        let agent = self.roster.get(agent_id).expect("agent exists");
        outcome.query = memory::generate_query(agent, gateway);
        if outcome.query.is_empty() {
            outcome
                .failures
                .push("query generation failed; no observations injected".into());
        }
        let retrieved = self
            .memory
            .retrieve(gateway, agent_id, &outcome.query, t, &config.retrieval);
        outcome.retrieved = retrieved.iter().map(|o| o.text.clone()).collect();

        let question_prompt = format!(
            "It is turn {t}.\n{}Ask the moderator one question about your environment or your roommate, \
             or describe what you would like to do next.",
            memory::render_observations(&retrieved)
        );
        let agent = self.roster.get_mut(agent_id).expect("agent exists");
        outcome.question = match agent.respond(gateway, &question_prompt) {
            Ok(q) => q,
            Err(e) => {
                outcome.failures.push(format!("{name} could not ask a question: {e}"));
                outcome.validation = Validation::Error("no question was asked".into());
                return;
            }
        };

        let offered = select_actions(gateway, &outcome.question, &self.registry, config.action_subset);
        outcome.offered_actions = offered.iter().map(|s| s.name.clone()).collect();
        let agent = self.roster.get(agent_id).expect("agent exists");
        let summary = summarize(&self.world, agent, &retrieved, &offered);
        let moderator_prompt = format!(
            "{name} asks: {}\n\nCurrent state of the environment:\n{summary}\n\
             Answer {name}'s question using only the information above and point out which of the listed actions could help.",
            outcome.question
        );
        let moderator_text = match self.moderator.respond(gateway, &moderator_prompt) {
            Ok(text) => text,
            Err(e) => {
                outcome.failures.push(format!("moderator could not answer: {e}"));
                String::new()
            }
        };
        let instructions = instruction_block(&offered);
        outcome.moderator_answer = if moderator_text.is_empty() {
            instructions
        } else {
            format!("{moderator_text}\n\n{instructions}")
        };

        let agent = self.roster.get_mut(agent_id).expect("agent exists");
        let reply = match agent.respond_structured(
            gateway,
            &outcome.moderator_answer,
            &action_schema(),
            config.action_retries,
        ) {
            Ok(r) => r,
            Err(e) => {
                outcome.validation = Validation::Error(format!("no usable action: {e}"));
                outcome.effect = "No action was taken.".into();
                return;
            }
        };
        let call = match parse_action_call(&reply.fields, &reply.raw) {
            Ok(c) => c,
            Err(e) => {
                outcome.validation = Validation::Error(e.to_string());
                outcome.effect = "No action was taken.".into();
                return;
            }
        };
        outcome.call = Some(call.clone());

        let spec = match validate(&call, &self.registry, &self.world) {
            Ok(spec) => spec.clone(),
            Err(e) => {
                outcome.effect = format!("The moderator rejected {call}: {e}");
                outcome.validation = Validation::Error(e.to_string());
                return;
            }
        };
        match spec.effect {
            ActionEffect::Speak => {
                let to = call.args[0].as_str().unwrap_or_default().to_string();
                let text = call.args[1].as_str().unwrap_or_default().to_string();
                match self.speak(gateway, agent_id, &to, &text) {
                    Ok(reply) => {
                        outcome.validation = Validation::Ok;
                        outcome.success = true;
                        outcome.effect = format!("{to} (via {}): {reply}", spec.name);
                    }
                    Err(SpeakError::Invalid(e)) => {
                        outcome.effect = format!("The moderator rejected {call}: {e}");
                        outcome.validation = Validation::Error(e.to_string());
                    }
                    Err(e @ SpeakError::NoReply { .. }) => {
                        outcome.validation = Validation::Ok;
                        outcome.effect = e.to_string();
                        outcome.failures.push(e.to_string());
                    }
                }
            }
            ActionEffect::World(_) => {
                let applied = apply(&mut self.world, &spec, &call);
                outcome.validation = Validation::Ok;
                outcome.success = applied.ok;
                outcome.effect = applied.effect;
                if !applied.ok {
                    outcome.failures.push(outcome.effect.clone());
                }
            }
        }
    }

    fn observe(
        &mut self,
        gateway: &mut dyn Gateway,
        agent_id: AgentId,
        config: &EngineConfig,
        outcome: &mut TurnOutcome,
    ) {
        let effect = if outcome.effect.is_empty() {
            "Nothing happened."
        } else {
            &outcome.effect
        };
        let prompt =
            format!("Outcome: {effect}\nIn one short sentence, state an observation about your situation now.");
        let agent = self.roster.get_mut(agent_id).expect("agent exists");
        outcome.observation_text = match agent.respond(gateway, &prompt) {
            Ok(text) if !text.trim().is_empty() => text.trim().to_string(),
            Ok(_) => effect.to_string(),
            Err(e) => {
                outcome
                    .failures
                    .push(format!("observation fell back to the outcome text: {e}"));
                effect.to_string()
            }
        };
        if let Err(e) = self.memory.record(
            gateway,
            agent_id,
            &outcome.observation_text,
            outcome.turn,
            &config.retrieval,
        ) {
            outcome.failures.push(format!("observation not stored: {e}"));
        }
    }

    /// Every roster member takes a turn, in roster order, for
    /// `config.max_rounds` rounds. `on_turn` sees each outcome as it lands.
    pub fn run_loop(
        &mut self,
        gateway: &mut dyn Gateway,
        config: &EngineConfig,
        mut on_turn: impl FnMut(&TurnOutcome),
    ) -> Vec<TurnOutcome> {
        let mut transcript = Vec::new();
        for _ in 0..config.max_rounds {
            for id in self.roster.ids() {
                let outcome = self.run_turn(gateway, id, config);
                on_turn(&outcome);
                transcript.push(outcome);
            }
        }
        transcript
    }
}
