//! Client for OpenAI-compatible chat-completion endpoints.

use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::http::{RetryPolicy, Semaphore};
use super::{Backend, ChatRequest, ChatResponse, GatewayError, Result, Usage};

const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub chat_path: String,
    pub embeddings_path: String,
    pub model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the bearer credential.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_initial_ms: u64,
    pub concurrency: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            chat_path: "/chat/completions".into(),
            embeddings_path: "/embeddings".into(),
            model: String::new(),
            embedding_model: String::new(),
            api_key_env: "LLM_API_KEY".into(),
            timeout_secs: 60,
            retries: 3,
            backoff_initial_ms: 1000,
            concurrency: 4,
        }
    }
}

impl RemoteConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.retries,
            initial: Duration::from_millis(self.backoff_initial_ms),
            ..RetryPolicy::default()
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    client: Client,
    limit: Semaphore,
}

impl RemoteBackend {
    /// Reads the credential from the environment variable named in `config`.
    pub fn from_env(config: RemoteConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env).map_err(|_| {
            GatewayError::Config(format!(
                "environment variable {} with the API credential is not set",
                config.api_key_env
            ))
        })?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: RemoteConfig, api_key: String) -> Result<Self> {
        if config.endpoint.is_empty() {
            return Err(GatewayError::Config("remote endpoint URL is not set".into()));
        }
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        let limit = Semaphore::new(config.concurrency);
        Ok(RemoteBackend {
            config,
            api_key,
            client,
            limit,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!(
            "{}/{}",
            self.config.endpoint.trim_end_matches('/'),
            path.trim_start_matches('/')
        )
    }

    /// POSTs `body` to `path` with retries; returns the decoded JSON body.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        let _permit = self.limit.acquire();
        let url = self.url(path);
        self.config.retry_policy().run(|attempt| {
            tracing::debug!(%url, attempt, "remote request");
            let response = self
                .client
                .post(&url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send()
                .map_err(|e| (GatewayError::Transport { attempts: attempt, message: e.to_string() }, true))?;
            let status = response.status();
            let text = response
                .text()
                .map_err(|e| (GatewayError::Transport { attempts: attempt, message: e.to_string() }, true))?;
            if !status.is_success() {
                let retryable = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
                let body: String = text.chars().take(BODY_EXCERPT_CHARS).collect();
                return Err((GatewayError::Remote { status: status.as_u16(), body }, retryable));
            }
            serde_json::from_str(&text).map_err(|e| (GatewayError::Decode(e.to_string()), false))
        })
    }
}

impl Backend for RemoteBackend {
    fn id(&self) -> String {
        format!("remote:{}", self.config.model)
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let model = if request.model_id.is_empty() {
            &self.config.model
        } else {
            &request.model_id
        };
        let body = json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let start = Instant::now();
        let value = self.post_json(&self.config.chat_path, &body)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Decode("response has no choices[0].message.content".into()))?
            .to_string();
        let count = |p: &str| value.pointer(p).and_then(Value::as_u64).unwrap_or(0);
        Ok(ChatResponse {
            content,
            usage: Usage {
                prompt_tokens: count("/usage/prompt_tokens"),
                completion_tokens: count("/usage/completion_tokens"),
            },
            latency: start.elapsed(),
        })
    }
}
