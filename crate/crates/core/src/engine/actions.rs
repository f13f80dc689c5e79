//! Registered actions, their validation, and execution with rollback.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::world::{Scalar, ScalarKind, World};
use crate::gateway::Gateway;

pub type Handler = Arc<dyn Fn(&mut World, &[Scalar]) -> Result<String, String> + Send + Sync>;
pub type Guard = Arc<dyn Fn(&World, &[Scalar]) -> Result<(), String> + Send + Sync>;

#[derive(Clone)]
pub enum ActionEffect {
    /// Mutates the world and reports what happened.
    World(Handler),
    /// Delivers a message to another roster member, who answers at once.
    /// Carried out by the engine, which owns the roster.
    Speak,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ScalarKind,
}

#[derive(Clone)]
pub struct ActionSpec {
    pub name: String,
    pub description: String,
    pub params: Vec<ParamSpec>,
    pub tags: Vec<String>,
    pub effect: ActionEffect,
    guard: Option<Guard>,
}

impl fmt::Debug for ActionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionSpec")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("tags", &self.tags)
            .finish_non_exhaustive()
    }
}

impl ActionSpec {
    pub fn new<F>(name: &str, description: &str, handler: F) -> Self
    where
        F: Fn(&mut World, &[Scalar]) -> Result<String, String> + Send + Sync + 'static,
    {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            params: Vec::new(),
            tags: Vec::new(),
            effect: ActionEffect::World(Arc::new(handler)),
            guard: None,
        }
    }

    /// An action whose arguments are `(to: text, message: text)`.
    pub fn speak(name: &str, description: &str) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            params: vec![
                ParamSpec {
                    name: "to".into(),
                    kind: ScalarKind::Text,
                },
                ParamSpec {
                    name: "message".into(),
                    kind: ScalarKind::Text,
                },
            ],
            tags: vec!["social".into()],
            effect: ActionEffect::Speak,
            guard: None,
        }
    }

    pub fn param(mut self, name: &str, kind: ScalarKind) -> Self {
        self.params.push(ParamSpec {
            name: name.to_string(),
            kind,
        });
        self
    }

    pub fn tag(mut self, tag: &str) -> Self {
        self.tags.push(tag.to_string());
        self
    }

    /// Extra precondition checked during validation, after arity and kinds.
    pub fn guard<F>(mut self, guard: F) -> Self
    where
        F: Fn(&World, &[Scalar]) -> Result<(), String> + Send + Sync + 'static,
    {
        self.guard = Some(Arc::new(guard));
        self
    }

    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| format!("{}: {}", p.name, p.kind)).collect();
        format!("{}({})", self.name, params.join(", "))
    }

    /// `signature: description`, as shown to agents.
    pub fn render(&self) -> String {
        format!("{}: {}", self.signature(), self.description)
    }

    /// Text embedded when ranking actions against a question.
    pub fn embedding_text(&self) -> String {
        format!("{} {}", self.name, self.description)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ActionRegistry {
    specs: Vec<ActionSpec>,
}

impl ActionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: ActionSpec) -> Result<(), String> {
        if self.get(&spec.name).is_some() {
            return Err(format!("action `{}` is already registered", spec.name));
        }
        self.specs.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ActionSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn specs(&self) -> &[ActionSpec] {
        &self.specs
    }

    pub fn names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// A registry holding only the named actions, in this registry's order.
    pub fn subset(&self, names: &[&str]) -> Self {
        Self {
            specs: self
                .specs
                .iter()
                .filter(|s| names.contains(&s.name.as_str()))
                .cloned()
                .collect(),
        }
    }
}

/// An agent's chosen action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCall {
    pub name: String,
    pub args: Vec<Scalar>,
}

impl ActionCall {
    pub fn new(name: &str, args: Vec<Scalar>) -> Self {
        Self {
            name: name.to_string(),
            args,
        }
    }
}

impl fmt::Display for ActionCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| match a {
                Scalar::Text(s) => format!("{s:?}"),
                other => other.to_string(),
            })
            .collect();
        write!(f, "{}({})", self.name, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("`{action}` takes {expected} argument(s) but got {got}")]
    Arity {
        action: String,
        expected: usize,
        got: usize,
    },
    #[error("argument `{param}` of `{action}` must be {expected}, got {got}")]
    KindMismatch {
        action: String,
        param: String,
        expected: ScalarKind,
        got: ScalarKind,
    },
    #[error("`{action}` rejected: {reason}")]
    Rejected { action: String, reason: String },
    #[error("no roster member named `{0}`")]
    UnknownRecipient(String),
    #[error("an agent cannot speak to itself")]
    SelfAddressed,
    #[error("only one action may be taken per turn")]
    MultipleActions,
    #[error("no usable action: {0}")]
    Unparseable(String),
}

/// Checks that `call` names a registered action with matching arity and
/// argument kinds, then runs the action's own guard.
pub fn validate<'r>(
    call: &ActionCall,
    registry: &'r ActionRegistry,
    world: &World,
) -> Result<&'r ActionSpec, ValidationError> {
    let spec = registry
        .get(&call.name)
        .ok_or_else(|| ValidationError::UnknownAction(call.name.clone()))?;
    if spec.params.len() != call.args.len() {
        return Err(ValidationError::Arity {
            action: spec.name.clone(),
            expected: spec.params.len(),
            got: call.args.len(),
        });
    }
    for (param, arg) in spec.params.iter().zip(&call.args) {
        if param.kind != arg.kind() {
            return Err(ValidationError::KindMismatch {
                action: spec.name.clone(),
                param: param.name.clone(),
                expected: param.kind,
                got: arg.kind(),
            });
        }
    }
    if let Some(guard) = &spec.guard {
        guard(world, &call.args).map_err(|reason| ValidationError::Rejected {
            action: spec.name.clone(),
            reason,
        })?;
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    pub effect: String,
    pub ok: bool,
}

/// Runs a validated world action. A handler that fails or panics leaves
/// the world exactly as it was before the call.
pub fn apply(world: &mut World, spec: &ActionSpec, call: &ActionCall) -> Applied {
    let handler = match &spec.effect {
        ActionEffect::World(h) => h,
        ActionEffect::Speak => {
            return Applied {
                effect: format!("{} must be carried out by the engine", spec.name),
                ok: false,
            }
        }
    };
    let snapshot = world.clone();
    let outcome = catch_unwind(AssertUnwindSafe(|| handler(world, &call.args)));
    match outcome {
        Ok(Ok(effect)) => Applied { effect, ok: true },
        Ok(Err(fault)) => {
            *world = snapshot;
            Applied {
                effect: format!("{call} failed: {fault}"),
                ok: false,
            }
        }
        Err(_) => {
            *world = snapshot;
            Applied {
                effect: format!("{call} failed unexpectedly"),
                ok: false,
            }
        }
    }
}

/// The `m` actions whose descriptions are most similar to `question`, best
/// first; ties keep registry order. When `m` covers the whole registry it
/// is returned as is.
pub fn select_actions<'r>(
    gateway: &mut dyn Gateway,
    question: &str,
    registry: &'r ActionRegistry,
    m: usize,
) -> Vec<&'r ActionSpec> {
    if m >= registry.len() {
        return registry.specs().iter().collect();
    }
    let scored: Result<Vec<(usize, f64)>, _> = (|| {
        let q = gateway.embed(question)?;
        registry
            .specs()
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let e = gateway.embed(&spec.embedding_text())?;
                Ok::<_, crate::gateway::GatewayError>((i, q.dot(&e).unwrap_or(f64::NEG_INFINITY)))
            })
            .collect()
    })();
    match scored {
        Ok(mut scored) => {
            scored.sort_by(|(i, a), (j, b)| b.total_cmp(a).then(i.cmp(j)));
            scored.into_iter().take(m).map(|(i, _)| &registry.specs()[i]).collect()
        }
        Err(e) => {
            log::warn!("action ranking unavailable ({e}); offering the first {m} actions");
            registry.specs().iter().take(m).collect()
        }
    }
}

pub fn render_actions(specs: &[&ActionSpec]) -> String {
    specs.iter().map(|s| format!("- {}\n", s.render())).collect()
}
