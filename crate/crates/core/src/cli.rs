//! The `synergos` command line: load a scenario config, pick a backend,
//! run, and write the JSONL transcript plus a readable log.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::agent::{AgentError, Roster};
use crate::apartment::{build_apartment, build_cake_variant, ApartmentConfig};
use crate::coding::{run_coding, CodingConfig, CodingError, EditStatus};
use crate::config::{default_coders, load_config, ConfigError, Scenario, ScenarioConfig};
use crate::engine::EngineConfig;
use crate::gateway::{
    read_cassette, CassetteWriter, Gateway, GatewayError, GenParams, HashEmbedder, HttpGateway, Msg, Recording,
    ScriptedGateway, DEFAULT_RETRIES,
};
use crate::memory::MemoryError;
use crate::trio::{cast_settings, run_trio_chat, DEFAULT_CAST};

pub const URL_ENV: &str = "SYNERGOS_LLM_URL";
pub const LOG_ENV: &str = "SYNERGOS_LOG";
pub const USAGE: &str = "usage: synergos run --config <path> [--script <cassette>] [--out <path>] \
[--max-rounds N] [--seed N] [--record <cassette>]";

#[derive(Debug, Parser)]
#[command(name = "synergos", version, about = "Turn-based multi-agent LLM simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the scenario described by a config file.
    Run(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Replay this cassette instead of calling a live model.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Transcript path; for the coding scenario, the generated code file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record every backend exchange to this cassette.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no backend: pass --script, set backend.url or backend.script in the config, or set {URL_ENV}")]
    NoBackend,
    #[error("cannot open cassette: {0}")]
    Cassette(GatewayError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

/// What a finished run reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub turns: usize,
    pub ok: usize,
    pub failed: usize,
    pub transcript: PathBuf,
    pub log: PathBuf,
    pub code: Option<PathBuf>,
    /// Set when the backend stopped answering during the run.
    pub backend_failure: Option<String>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = format!(
            "turns run: {}\nactions ok: {}\nactions failed: {}\ntranscript: {}\nlog: {}\n",
            self.turns,
            self.ok,
            self.failed,
            self.transcript.display(),
            self.log.display()
        );
        if let Some(code) = &self.code {
            out.push_str(&format!("code: {}\n", code.display()));
        }
        out
    }
}

/// Passes calls through until the backend fails for good, then fails every
/// later call at once so the run winds down without more network waits.
struct Tracking<G> {
    inner: G,
    failure: Option<String>,
}

impl<G: Gateway> Tracking<G> {
    fn note<T>(&mut self, result: Result<T, GatewayError>) -> Result<T, GatewayError> {
        if let Err(e) = &result {
            if e.is_backend_failure() || matches!(e, GatewayError::ScriptExhausted { .. }) {
                self.failure.get_or_insert_with(|| e.to_string());
            }
        }
        result
    }

    fn tripped(&self) -> Result<(), GatewayError> {
        match &self.failure {
            Some(_) => Err(GatewayError::Unreachable(
                "not retried after an earlier backend failure".into(),
            )),
            None => Ok(()),
        }
    }
}

impl<G: Gateway> Gateway for Tracking<G> {
    fn complete(&mut self, history: &[Msg], params: &GenParams) -> Result<String, GatewayError> {
        self.tripped()?;
        let result = self.inner.complete(history, params);
        self.note(result)
    }

    fn embed_raw(&mut self, text: &str) -> Result<Vec<f64>, GatewayError> {
        self.tripped()?;
        let result = self.inner.embed_raw(text);
        self.note(result)
    }
}

/// JSONL transcript plus its plain-text mirror, both flushed per entry.
pub struct TranscriptSink {
    jsonl: BufWriter<File>,
    log: BufWriter<File>,
    paths: (PathBuf, PathBuf),
    error: Option<RunError>,
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| RunError::Output {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| RunError::Output {
            path: path.to_path_buf(),
            source,
        })
}

impl TranscriptSink {
    pub fn create(transcript: &Path, log: &Path) -> Result<Self, RunError> {
        Ok(Self {
            jsonl: create(transcript)?,
            log: create(log)?,
            paths: (transcript.to_path_buf(), log.to_path_buf()),
            error: None,
        })
    }

    /// Appends one entry. The first write error is kept and later writes
    /// are skipped; [`finish`](Self::finish) reports it.
    pub fn write(&mut self, entry: &impl Serialize, text: &str) {
        if self.error.is_some() {
            return;
        }
        let line = serde_json::to_string(entry).expect("transcript entries serialize");
        let result = writeln!(self.jsonl, "{line}")
            .and_then(|_| self.jsonl.flush())
            .map_err(|source| RunError::Output {
                path: self.paths.0.clone(),
                source,
            })
            .and_then(|_| self.text(text));
        if let Err(e) = result {
            self.error = Some(e);
        }
    }

    fn text(&mut self, text: &str) -> Result<(), RunError> {
        self.log
            .write_all(text.as_bytes())
            .and_then(|_| self.log.flush())
            .map_err(|source| RunError::Output {
                path: self.paths.1.clone(),
                source,
            })
    }

    pub fn finish(self) -> Result<(), RunError> {
        self.error.map_or(Ok(()), Err)
    }
}

fn absolute(path: &Path) -> PathBuf {
    std::env::current_dir()
        .map(|cwd| cwd.join(path))
        .unwrap_or_else(|_| path.to_path_buf())
}

/// Loads the config and folds in command-line overrides.
pub fn effective_config(args: &RunArgs) -> Result<ScenarioConfig, RunError> {
    let mut config = load_config(&args.config)?;
    if let Some(rounds) = args.max_rounds {
        config.max_rounds = rounds;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        let out = absolute(out);
        if config.scenario == Scenario::Coding {
            config.output.code = Some(out);
        } else {
            config.output.transcript = Some(out);
        }
    }
    config.validate()?;
    Ok(config)
}

fn replay(path: &Path, seed: u64) -> Result<Box<dyn Gateway>, RunError> {
    let records = read_cassette(path).map_err(RunError::Cassette)?;
    let embedder = HashEmbedder::new(crate::gateway::DEFAULT_DIMENSION, seed);
    Ok(Box::new(
        ScriptedGateway::from_cassette(&records).with_embedder(embedder),
    ))
}

/// Backend precedence: `--script`, then the config's script, then the
/// config's URL, then the URL environment variable.
pub fn open_backend(args: &RunArgs, config: &ScenarioConfig) -> Result<Box<dyn Gateway>, RunError> {
    let model = &config.backend.model;
    let backend: Box<dyn Gateway> = if let Some(script) = &args.script {
        replay(script, config.seed)?
    } else if let Some(script) = config.script_path() {
        replay(&script, config.seed)?
    } else if let Some(url) = &config.backend.url {
        Box::new(HttpGateway::new(url, model))
    } else if let Some(url) = std::env::var(URL_ENV).ok().filter(|u| !u.trim().is_empty()) {
        Box::new(HttpGateway::new(&url, model))
    } else {
        return Err(RunError::NoBackend);
    };
    match &args.record {
        Some(path) => {
            let writer = CassetteWriter::create(path).map_err(RunError::Cassette)?;
            Ok(Box::new(Recording::new(backend, model.clone(), writer)))
        }
        None => Ok(backend),
    }
}

/// Runs the configured scenario against `gateway`, streaming entries into
/// `sink`. Returns (turns, ok, failed).
pub fn run_scenario(
    config: &ScenarioConfig,
    gateway: &mut dyn Gateway,
    sink: &mut TranscriptSink,
) -> Result<(usize, usize, usize), RunError> {
    match config.scenario {
        Scenario::TrioChat => {
            let mut roster = Roster::from_settings(&config.apply_overrides(cast_settings(&DEFAULT_CAST))?)?;
            let turns = config.max_rounds * roster.len();
            let lines = run_trio_chat(gateway, &mut roster, turns, DEFAULT_RETRIES, |line| {
                sink.write(line, &line.render())
            })?;
            let failed = lines.iter().filter(|l| l.error.is_some()).count();
            Ok((lines.len(), lines.len() - failed, failed))
        }
        Scenario::Apartment | Scenario::ApartmentCake => {
            let defaults = ApartmentConfig::default();
            let moderator_name = defaults.moderator.name.clone();
            let mut all = defaults.roommates.clone();
            all.push(defaults.moderator.clone());
            let mut all = config.apply_overrides(all)?;
            let index = all
                .iter()
                .position(|s| s.name == moderator_name)
                .expect("moderator kept");
            let moderator = all.remove(index);
            let apartment = ApartmentConfig {
                roommates: all,
                moderator,
            };
            let mut sim = if config.scenario == Scenario::Apartment {
                build_apartment(&apartment)?
            } else {
                build_cake_variant(&apartment)?
            };
            let engine = EngineConfig {
                max_rounds: config.max_rounds,
                retrieval: config.retrieval_params(),
                ..Default::default()
            };
            let outcomes = sim.run_loop(gateway, &engine, |outcome| sink.write(outcome, &outcome.render()));
            if let Some(path) = &config.output.memory {
                sim.memory.dump(&config.resolve(path))?;
            }
            let ok = outcomes.iter().filter(|o| o.success).count();
            Ok((outcomes.len(), ok, outcomes.len() - ok))
        }
        Scenario::Coding => {
            let mut roster = Roster::from_settings(&config.apply_overrides(default_coders())?)?;
            let section = &config.coding;
            let coding = CodingConfig {
                max_rounds: config.max_rounds,
                termination: section.termination,
                max_edit_lines: section.max_edit_lines,
                chat_window: section.chat_window,
                language_ext: section.language_ext.clone(),
                output: Some(config.code_path()),
                post_run_hook: section.post_run_hook.clone(),
                planner_params: GenParams {
                    seed: Some(config.seed),
                    ..CodingConfig::default().planner_params
                },
                ..Default::default()
            };
            let run = run_coding(gateway, &mut roster, &section.problem, &coding, |turn| {
                sink.write(turn, &turn.render())
            })?;
            let ok = run
                .transcript
                .iter()
                .filter(|t| t.edit_status == EditStatus::Applied)
                .count();
            let failed = run
                .transcript
                .iter()
                .filter(|t| matches!(t.edit_status, EditStatus::Rejected(_)) || !t.failures.is_empty())
                .count();
            sink.text(&format!("plan:\n{}", run.plan.render()))?;
            Ok((run.transcript.len(), ok, failed))
        }
    }
}

/// Runs one `synergos run` invocation end to end.
pub fn run(args: &RunArgs) -> Result<Summary, RunError> {
    let config = effective_config(args)?;
    let mut gateway = Tracking {
        inner: open_backend(args, &config)?,
        failure: None,
    };
    let (transcript, log) = (config.transcript_path(), config.log_path());
    let mut sink = TranscriptSink::create(&transcript, &log)?;
    let (turns, ok, failed) = run_scenario(&config, &mut gateway, &mut sink)?;
    sink.finish()?;
    Ok(Summary {
        turns,
        ok,
        failed,
        transcript,
        log,
        code: (config.scenario == Scenario::Coding).then(|| config.code_path()),
        backend_failure: gateway.failure,
    })
}

/// Entry point; returns the process exit code: 0 on success, 1 on a
/// configuration or usage error, 2 when the backend failed.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let Command::Run(args) = cli.command;
    match run(&args) {
        Ok(summary) => {
            print!("{}", summary.render());
            match summary.backend_failure {
                Some(reason) => {
                    eprintln!("error: {reason}");
                    2
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, RunError::Config(_) | RunError::NoBackend) {
                eprintln!("{USAGE}");
            }
            1
        }
    }
}
