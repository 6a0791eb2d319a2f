//! Chat-completion gateway: one request/response contract served by a remote
//! wire-compatible client or by deterministic offline mocks.

mod http;
mod mock;
mod remote;
mod select;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{RetryPolicy, Semaphore};
pub use mock::{
    extract_statistics, ConstantBackend, CountingBackend, EvidenceAveraging, EvidenceFollowing,
    MockBackend, MockRule, MockScript,
};
pub use remote::{RemoteBackend, RemoteConfig};
pub use select::{backend_from_selector, BackendSelector};

#[cfg(test)]
pub(crate) use remote::test_server::TestServer;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    Input(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("remote returned status {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("could not decode response: {0}")]
    Decode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mock script error: {0}")]
    Script(String),
}

pub type Result<T, E = GatewayError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl ChatRequest {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            messages,
            temperature: 0.0,
            max_tokens: 1024,
            model_id: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(GatewayError::Input("request has no messages".into()));
        }
        if self.messages[1..].iter().any(|m| m.role == Role::System) {
            return Err(GatewayError::Input("only the first message may be a system message".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::Input(format!(
                "temperature must be a non-negative number, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Input("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message contents joined by blank lines, the text mock rules match against.
    pub fn flattened(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Usage,
    pub latency: Duration,
}

pub trait Backend: Send + Sync {
    /// Stable identifier recorded in report headers.
    fn id(&self) -> String;

    /// Serves an already validated request.
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse>;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let start = Instant::now();
        let mut response = self.send(request)?;
        response.latency = start.elapsed();
        Ok(response)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        (**self).send(request)
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        (**self).complete(request)
    }
}

/// Validates `request` and serves it through `backend`.
pub fn complete(request: &ChatRequest, backend: &dyn Backend) -> Result<ChatResponse> {
    backend.complete(request)
}

/// Rough whitespace token count used for mock usage figures.
pub(crate) fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_messages_are_rejected() {
        let backend = ConstantBackend::new(0.5).unwrap();
        let err = complete(&ChatRequest::new(vec![]), &backend).unwrap_err();
        assert!(matches!(err, GatewayError::Input(_)));
    }

    #[test]
    fn late_system_message_is_rejected() {
        let req = ChatRequest::new(vec![ChatMessage::user("hi"), ChatMessage::system("x")]);
        assert!(req.validate().is_err());
    }

    #[test]
    fn negative_temperature_is_rejected() {
        let mut req = ChatRequest::new(vec![ChatMessage::user("hi")]);
        req.temperature = -0.1;
        assert!(req.validate().is_err());
    }
}
