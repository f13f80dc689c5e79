//! Turn-based multi-agent LLM simulations.
//!
//! Persona-bearing agents share one chat model and act on a mutable world
//! through a moderator. Each agent keeps a bounded history plus a long-term
//! store of scored observations. Two scenarios ship with the crate (an
//! apartment with two roommates and a collaborative coding room), along with
//! a three-agent directed chat. A scripted backend makes every run
//! reproducible without a live model.

pub mod agent;
pub mod apartment;
pub mod cli;
pub mod coding;
pub mod config;
pub mod engine;
pub mod gateway;
pub mod json;
pub mod memory;
pub mod trio;

pub use agent::{Agent, AgentError, AgentId, DirectedMessage, Roster};
pub use engine::{
    ActionCall, ActionRegistry, ActionSpec, Scalar, ScalarKind, Simulation, TurnOutcome, Validation, World, WorldObject,
};
pub use gateway::{Embedding, Gateway, GatewayError, GenParams, Msg, Role, ScriptedGateway};
pub use memory::{MemoryStore, Observation, RetrievalParams};
