//! The decision agent: perception, retrieval, prompt assembly, LLM reasoning,
//! decision parsing, and episodic memory.

mod decision;
mod memory;
mod perception;
mod pipeline;
mod prompt;

pub use decision::{parse_decision, render_decision, AgentDecision, EvidenceRef};
pub use memory::{parse_events, EpisodicMemory, MemoryRecord, TimedEvent};
pub use perception::{perceive, perceive_rules, ParsedFactor, ParsedProfile, UserProfile};
pub use pipeline::{Agent, AgentConfig};
pub use prompt::{assemble_prompt, EvidenceLine, PromptBundle, PromptTemplate};

use thiserror::Error;

use crate::llm::GatewayError;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("perception error: {0}")]
    Perception(String),
    #[error("prompt assembly error: {0}")]
    Assembly(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("could not parse a probability: {0}")]
    Parse(String),
    #[error("no usable decision after {attempts} attempt(s); last error: {last_error}")]
    Decision {
        attempts: usize,
        responses: Vec<String>,
        last_error: String,
    },
    #[error("memory error: {0}")]
    Memory(String),
    #[error("trajectory step {step}: {source}")]
    Trajectory {
        step: usize,
        #[source]
        source: Box<AgentError>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;
