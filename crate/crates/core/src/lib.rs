//! Survey-grounded flood-insurance purchase benchmark and a retrieval-grounded
//! LLM decision agent evaluated against it.

pub mod agent;
pub mod artifact;
pub mod eval;
pub mod fixtures;
pub mod schema;
pub mod synth;
pub mod llm;
pub mod store;
