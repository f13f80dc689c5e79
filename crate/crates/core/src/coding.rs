//! Collaborative coding room.
//!
//! A planner turns the problem into a step list. Agents then take turns
//! making one small line-anchored edit to a shared buffer and posting to a
//! chatroom, until they declare the code done.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentError, AgentId, Roster};
use crate::gateway::{FieldKind, FieldSpec, Gateway, GenParams, Msg};

pub const DEFAULT_MAX_EDIT_LINES: usize = 5;
pub const DEFAULT_CHAT_WINDOW: usize = 10;

pub const PLANNER_PERSONA: &str = "You are an expert problem solver. Split the problem you are given into a short \
numbered list of concrete steps that will help a team of programmers solve it.";
pub const CODER_PERSONA: &str = "You are a software engineer collaborating with other engineers in a shared code \
editor. Each turn you may change a few lines of the shared code and post a message to the team chatroom.";

#[derive(Debug, Error)]
pub enum CodingError {
    #[error("edit has {got} new lines; at most {max} are allowed")]
    TooManyLines { got: usize, max: usize },
    #[error("edit range {start}..{end} is outside a buffer of {len} lines")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("the problem statement is empty")]
    EmptyProblem,
    #[error("collaboration needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A line-anchored change. Line indexes are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Edit {
    /// Insert `lines` after line `anchor`.
    InsertAfter { anchor: usize, lines: Vec<String> },
    /// Replace lines `start..end` (half-open) with `lines`; `start == end`
    /// inserts before `start`.
    ReplaceRange {
        start: usize,
        end: usize,
        lines: Vec<String>,
    },
}

impl Edit {
    pub fn new_lines(&self) -> &[String] {
        match self {
            Edit::InsertAfter { lines, .. } | Edit::ReplaceRange { lines, .. } => lines,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub turn: u64,
    pub agent: AgentId,
    pub edit: Edit,
}

/// Shared source text plus the log of every accepted edit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeBuffer {
    lines: Vec<String>,
    edit_log: Vec<EditRecord>,
}

impl CodeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn edit_log(&self) -> &[EditRecord] {
        &self.edit_log
    }

    /// Applies `edit` if it fits the line cap and the buffer bounds.
    /// Rejected edits leave the buffer and the log untouched.
    pub fn apply_edit(&mut self, turn: u64, agent: AgentId, edit: Edit, max_lines: usize) -> Result<(), CodingError> {
        let got = edit.new_lines().len();
        if got > max_lines {
            return Err(CodingError::TooManyLines { got, max: max_lines });
        }
        let len = self.lines.len();
        let (start, end) = match &edit {
            Edit::InsertAfter { anchor, .. } if *anchor < len => (anchor + 1, anchor + 1),
            Edit::InsertAfter { anchor, .. } => {
                return Err(CodingError::OutOfBounds {
                    start: *anchor,
                    end: anchor + 1,
                    len,
                })
            }
            Edit::ReplaceRange { start, end, .. } if start <= end && *end <= len => (*start, *end),
            Edit::ReplaceRange { start, end, .. } => {
                return Err(CodingError::OutOfBounds {
                    start: *start,
                    end: *end,
                    len,
                })
            }
        };
        self.lines.splice(start..end, edit.new_lines().iter().cloned());
        self.edit_log.push(EditRecord { turn, agent, edit });
        Ok(())
    }

    /// Rebuilds a buffer from an edit log, starting empty.
    pub fn replay(log: &[EditRecord]) -> Result<Self, CodingError> {
        let mut buffer = Self::new();
        for record in log {
            buffer.apply_edit(record.turn, record.agent, record.edit.clone(), usize::MAX)?;
        }
        Ok(buffer)
    }

    /// File contents: the lines joined with newlines, always newline-terminated.
    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    pub fn numbered(&self) -> String {
        if self.lines.is_empty() {
            return "(the code is empty)\n".into();
        }
        self.lines
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{i}: {l}\n"))
            .collect()
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CodingError> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatEntry {
    pub turn: u64,
    pub agent: AgentId,
    pub name: String,
    pub text: String,
}

/// Append-only list of messages relayed to every agent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Chatroom {
    messages: Vec<ChatEntry>,
}

impl Chatroom {
    pub fn post(&mut self, entry: ChatEntry) {
        self.messages.push(entry);
    }

    pub fn messages(&self) -> &[ChatEntry] {
        &self.messages
    }

    pub fn recent(&self, count: usize) -> &[ChatEntry] {
        &self.messages[self.messages.len().saturating_sub(count)..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<String>,
}

impl Plan {
    pub fn render(&self) -> String {
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}\n", i + 1))
            .collect()
    }
}

fn list_item(line: &str) -> Option<&str> {
    let line = line.trim();
    let rest = if let Some(rest) = line.strip_prefix(['-', '*', '•']) {
        rest
    } else {
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return None;
        }
        line[digits..].strip_prefix(['.', ')'])?
    };
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(rest.trim()).filter(|s| !s.is_empty())
}

/// Numbered (`1.` / `1)`) or bulleted (`-`, `*`, `•`) lines of `reply`.
pub fn parse_plan(reply: &str) -> Vec<String> {
    reply.lines().filter_map(list_item).map(str::to_string).collect()
}

/// Asks the planner to split `problem` into steps. A reply without list
/// markers is retried; if none arrives, the raw reply becomes a one-step
/// plan.
pub fn plan(gateway: &mut dyn Gateway, problem: &str, params: &GenParams, retries: u32) -> Result<Plan, CodingError> {
    if problem.trim().is_empty() {
        return Err(CodingError::EmptyProblem);
    }
    let mut convo = vec![Msg::system(PLANNER_PERSONA), Msg::user(format!("Problem:\n{problem}"))];
    let mut last = gateway.chat(&convo, params).map_err(AgentError::from)?;
    for attempt in 0..=retries {
        let steps = parse_plan(&last);
        if !steps.is_empty() {
            return Ok(Plan { steps });
        }
        if attempt == retries {
            break;
        }
        convo.push(Msg::assistant(last.clone()));
        convo.push(Msg::user("Answer with a numbered list of steps, one per line."));
        match gateway.chat(&convo, params) {
            Ok(reply) => last = reply,
            Err(e) => {
                log::warn!("planner retry failed: {e}");
                break;
            }
        }
    }
    log::warn!("planner reply has no list markers; using it as a single step");
    Ok(Plan {
        steps: vec![last.trim().to_string()],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    /// Stop as soon as any agent says the code is done.
    Single,
    /// Stop once every agent has said so within one round.
    #[default]
    Unanimous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodingConfig {
    pub max_rounds: usize,
    pub termination: Termination,
    pub max_edit_lines: usize,
    pub chat_window: usize,
    pub retries: u32,
    pub planner_params: GenParams,
    /// Extension of the generated file, e.g. `py`.
    pub language_ext: String,
    pub output: Option<PathBuf>,
    /// Name of a post-run check to hand the output to. No runner ships with
    /// the crate; the name is only logged.
    pub post_run_hook: Option<String>,
}

impl Default for CodingConfig {
    fn default() -> Self {
        Self {
            max_rounds: 12,
            termination: Termination::Unanimous,
            max_edit_lines: DEFAULT_MAX_EDIT_LINES,
            chat_window: DEFAULT_CHAT_WINDOW,
            retries: crate::gateway::DEFAULT_RETRIES,
            planner_params: GenParams::with_temperature(0.2),
            language_ext: "py".into(),
            output: None,
            post_run_hook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditStatus {
    None,
    Applied,
    Rejected(String),
}

/// One agent's coding turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingTurn {
    pub turn: u64,
    pub agent_id: AgentId,
    pub agent: String,
    pub edit: Option<Edit>,
    pub edit_status: EditStatus,
    pub chat: String,
    pub done: bool,
    pub failures: Vec<String>,
}

impl CodingTurn {
    pub fn render(&self) -> String {
        let edit = match &self.edit_status {
            EditStatus::None => "no edit".to_string(),
            EditStatus::Applied => format!(
                "edit applied ({} line(s))",
                self.edit.as_ref().map_or(0, |e| e.new_lines().len())
            ),
            EditStatus::Rejected(why) => format!("edit rejected: {why}"),
        };
        let done = if self.done { " [done]" } else { "" };
        let mut out = format!("[turn {}] {} :: {} ({edit}){done}\n", self.turn, self.agent, self.chat);
        for failure in &self.failures {
            out.push_str(&format!("  ! {failure}\n"));
        }
        out
    }
}

fn turn_schema() -> Vec<FieldSpec> {
    vec![
        FieldSpec::optional("edit", FieldKind::Object),
        FieldSpec::required("chat", FieldKind::Text),
        FieldSpec::required("done", FieldKind::Bool),
    ]
}

fn turn_prompt(problem: &str, plan: &Plan, buffer: &CodeBuffer, chatroom: &Chatroom, config: &CodingConfig) -> String {
    let recent = chatroom.recent(config.chat_window);
    let chat = if recent.is_empty() {
        "(the chatroom is empty)\n".to_string()
    } else {
        recent
            .iter()
            .map(|m| format!("[turn {}] {}: {}\n", m.turn, m.name, m.text))
            .collect()
    };
    format!(
        "Problem:\n{problem}\n\nPlan from the expert problem solver:\n{}\n\
         Current code (line index: text):\n{}\nRecent chatroom messages:\n{chat}\n\
         You may make at most one edit of no more than {max} new lines. Edits use 0-based line indexes:\n\
         - {{\"kind\": \"insert_after\", \"anchor\": <line index>, \"lines\": [...]}} inserts after that line;\n\
         - {{\"kind\": \"replace_range\", \"start\": <first index>, \"end\": <one past the last index>, \"lines\": [...]}} \
         replaces those lines (start equal to end inserts before start; use start 0 and end 0 on empty code).\n\
         Respond with only a JSON object: {{\"edit\": <an edit or null>, \"chat\": \"<message to the other agents>\", \
         \"done\": <true if you think the code is complete, otherwise false>}}.",
        plan.render(),
        buffer.numbered(),
        max = config.max_edit_lines,
    )
}

/// One agent's turn: show the shared state, take one structured reply,
/// apply its edit if acceptable and always post its chat message.
#[allow(clippy::too_many_arguments)]
pub fn coding_turn(
    gateway: &mut dyn Gateway,
    agent: &mut Agent,
    turn: u64,
    problem: &str,
    plan: &Plan,
    buffer: &mut CodeBuffer,
    chatroom: &mut Chatroom,
    config: &CodingConfig,
) -> CodingTurn {
    let mut outcome = CodingTurn {
        turn,
        agent_id: agent.id(),
        agent: agent.name().to_string(),
        edit: None,
        edit_status: EditStatus::None,
        chat: String::new(),
        done: false,
        failures: Vec::new(),
    };
    let prompt = turn_prompt(problem, plan, buffer, chatroom, config);
    match agent.respond_structured(gateway, &prompt, &turn_schema(), config.retries) {
        Ok(reply) => {
            outcome.chat = reply.fields["chat"].as_str().unwrap_or_default().to_string();
            outcome.done = reply.fields["done"].as_bool().unwrap_or(false);
            let edit_value = &reply.fields["edit"];
            if !edit_value.is_null() {
                match serde_json::from_value::<Edit>(edit_value.clone()) {
                    Ok(edit) => {
                        outcome.edit = Some(edit.clone());
                        outcome.edit_status = match buffer.apply_edit(turn, agent.id(), edit, config.max_edit_lines) {
                            Ok(()) => EditStatus::Applied,
                            Err(e) => {
                                log::warn!("{} edit rejected: {e}", agent.name());
                                EditStatus::Rejected(e.to_string())
                            }
                        };
                    }
                    Err(e) => outcome.edit_status = EditStatus::Rejected(format!("malformed edit: {e}")),
                }
            }
        }
        Err(e) => {
            outcome.chat = format!("({} could not produce a usable reply)", agent.name());
            outcome.failures.push(e.to_string());
        }
    }
    chatroom.post(ChatEntry {
        turn,
        agent: agent.id(),
        name: agent.name().to_string(),
        text: outcome.chat.clone(),
    });
    outcome
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodingRun {
    pub plan: Plan,
    pub buffer: CodeBuffer,
    pub chatroom: Chatroom,
    pub transcript: Vec<CodingTurn>,
    /// True when the done signal ended the loop before `max_rounds`.
    pub finished: bool,
}

/// Runs the coding loop and, when `config.output` is set, writes the final
/// buffer there.
pub fn run_coding(
    gateway: &mut dyn Gateway,
    roster: &mut Roster,
    problem: &str,
    config: &CodingConfig,
    mut on_turn: impl FnMut(&CodingTurn),
) -> Result<CodingRun, CodingError> {
    if roster.len() < 2 {
        return Err(CodingError::TooFewAgents(roster.len()));
    }
    let plan = match plan(gateway, problem, &config.planner_params, config.retries) {
        Ok(plan) => plan,
        Err(CodingError::Agent(e)) => {
            log::warn!("planner unavailable ({e}); using the problem statement as the plan");
            Plan {
                steps: vec![problem.trim().to_string()],
            }
        }
        Err(e) => return Err(e),
    };

    let mut buffer = CodeBuffer::new();
    let mut chatroom = Chatroom::default();
    let mut transcript = Vec::new();
    let mut finished = false;
    let mut turn = 0u64;
    'rounds: for _ in 0..config.max_rounds {
        let mut done_this_round = BTreeSet::new();
        for id in roster.ids() {
            let agent = roster.get_mut(id).expect("id from roster");
            let outcome = coding_turn(gateway, agent, turn, problem, &plan, &mut buffer, &mut chatroom, config);
            debug_assert_eq!(CodeBuffer::replay(buffer.edit_log()).ok().as_ref(), Some(&buffer));
            turn += 1;
            on_turn(&outcome);
            let done = outcome.done;
            transcript.push(outcome);
            if done {
                done_this_round.insert(id);
                if config.termination == Termination::Single {
                    finished = true;
                    break 'rounds;
                }
            }
        }
        if config.termination == Termination::Unanimous && done_this_round.len() == roster.len() {
            finished = true;
            break;
        }
    }

    if let Some(path) = &config.output {
        buffer.write_to(path)?;
    }
    if let Some(hook) = &config.post_run_hook {
        log::info!("post-run hook `{hook}` requested; no code runner is available, skipping");
    }
    Ok(CodingRun {
        plan,
        buffer,
        chatroom,
        transcript,
        finished,
    })
}
