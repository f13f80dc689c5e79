//! Scenario configuration files (TOML).
//!
//! Relative paths inside a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::agent::AgentSettings;
use crate::coding::{Termination, CODER_PERSONA, DEFAULT_CHAT_WINDOW, DEFAULT_MAX_EDIT_LINES};
use crate::engine::DEFAULT_AGENT_TEMPERATURE;
use crate::memory::{ScoreWeights, DEFAULT_DECAY, DEFAULT_K};

pub const DEFAULT_MAX_ROUNDS: usize = 12;
pub const DEFAULT_MODEL: &str = "mistral-7b-instruct";
pub const DEFAULT_TRANSCRIPT: &str = "transcript.jsonl";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    TrioChat,
    Apartment,
    ApartmentCake,
    Coding,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub url: Option<String>,
    pub script: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: String,
}

fn default_model() -> String {
    DEFAULT_MODEL.into()
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            url: None,
            script: None,
            model: default_model(),
        }
    }
}

/// Per-agent override, matched by name. Unknown names add an agent.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverride {
    pub name: String,
    pub persona: Option<String>,
    pub temperature: Option<f64>,
    pub history_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub decay: f64,
    pub k: usize,
    pub weights: ScoreWeights,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            decay: DEFAULT_DECAY,
            k: DEFAULT_K,
            weights: ScoreWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// JSONL transcript; defaults to `transcript.jsonl`.
    pub transcript: Option<PathBuf>,
    /// Text log; defaults to the transcript path with a `.log` extension.
    pub log: Option<PathBuf>,
    /// Coding output file; defaults to `solution.<ext>`.
    pub code: Option<PathBuf>,
    /// Optional JSONL dump of the observation store after the run.
    pub memory: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodingSection {
    pub problem: String,
    pub termination: Termination,
    pub max_edit_lines: usize,
    pub chat_window: usize,
    pub language_ext: String,
    pub post_run_hook: Option<String>,
}

impl Default for CodingSection {
    fn default() -> Self {
        Self {
            problem: String::new(),
            termination: Termination::Unanimous,
            max_edit_lines: DEFAULT_MAX_EDIT_LINES,
            chat_window: DEFAULT_CHAT_WINDOW,
            language_ext: "py".into(),
            post_run_hook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub agents: Vec<AgentOverride>,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub coding: CodingSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_max_rounds() -> usize {
    DEFAULT_MAX_ROUNDS
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.base_dir = origin.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.backend.url.is_some() && self.backend.script.is_some() {
            return invalid("backend.url and backend.script are mutually exclusive".into());
        }
        if self.max_rounds == 0 {
            return invalid("max_rounds must be at least 1".into());
        }
        if !(self.retrieval.decay > 0.0 && self.retrieval.decay.is_finite()) {
            return invalid(format!(
                "retrieval.decay must be positive, got {}",
                self.retrieval.decay
            ));
        }
        if self.retrieval.k == 0 {
            return invalid("retrieval.k must be at least 1".into());
        }
        for agent in &self.agents {
            if let Some(t) = agent.temperature {
                if !(t >= 0.0 && t.is_finite()) {
                    return invalid(format!("agents.temperature for {} must be non-negative", agent.name));
                }
            }
            if agent.history_cap.is_some_and(|c| c < 2) {
                return invalid(format!("agents.history_cap for {} must be at least 2", agent.name));
            }
        }
        if self.scenario == Scenario::Coding {
            if self.coding.problem.trim().is_empty() {
                return invalid("coding.problem is required for the coding scenario".into());
            }
            if self.coding.max_edit_lines == 0 {
                return invalid("coding.max_edit_lines must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Resolves a config-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn script_path(&self) -> Option<PathBuf> {
        self.backend.script.as_deref().map(|p| self.resolve(p))
    }

    pub fn transcript_path(&self) -> PathBuf {
        self.resolve(
            self.output
                .transcript
                .as_deref()
                .unwrap_or(Path::new(DEFAULT_TRANSCRIPT)),
        )
    }

    pub fn log_path(&self) -> PathBuf {
        match &self.output.log {
            Some(p) => self.resolve(p),
            None => self.transcript_path().with_extension("log"),
        }
    }

    pub fn code_path(&self) -> PathBuf {
        match &self.output.code {
            Some(p) => self.resolve(p),
            None => self.resolve(Path::new(&format!("solution.{}", self.coding.language_ext))),
        }
    }

    pub fn retrieval_params(&self) -> crate::memory::RetrievalParams {
        crate::memory::RetrievalParams {
            decay: self.retrieval.decay,
            k: self.retrieval.k,
            weights: self.retrieval.weights,
            ..Default::default()
        }
    }

    /// Applies the `[[agents]]` overrides to `defaults`. Every agent gets
    /// the run seed.
    pub fn apply_overrides(&self, mut defaults: Vec<AgentSettings>) -> Result<Vec<AgentSettings>, ConfigError> {
        for o in &self.agents {
            let settings = match defaults.iter_mut().position(|s| s.name == o.name) {
                Some(i) => &mut defaults[i],
                None => {
                    let persona = o.persona.clone().ok_or_else(|| {
                        ConfigError::Invalid(format!(
                            "agent {} is not in the default cast and needs a persona",
                            o.name
                        ))
                    })?;
                    defaults.push(AgentSettings::new(&o.name, &persona, DEFAULT_AGENT_TEMPERATURE));
                    defaults.last_mut().expect("just pushed")
                }
            };
            if let Some(p) = &o.persona {
                settings.persona = p.clone();
            }
            if let Some(t) = o.temperature {
                settings.params.temperature = t;
            }
            settings.history_cap = o.history_cap.unwrap_or(settings.history_cap);
        }
        for s in &mut defaults {
            s.params.seed = Some(self.seed);
        }
        Ok(defaults)
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::parse(&text, path)
}

/// Default coding agents: `Agent 1`, `Agent 2`.
pub fn default_coders() -> Vec<AgentSettings> {
    (1..=2)
        .map(|i| AgentSettings::new(&format!("Agent {i}"), CODER_PERSONA, DEFAULT_AGENT_TEMPERATURE))
        .collect()
}
