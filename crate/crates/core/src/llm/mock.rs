//! Deterministic offline backends.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{approx_tokens, Backend, ChatRequest, ChatResponse, GatewayError, Result, Usage};

fn response(request: &ChatRequest, content: String) -> ChatResponse {
    ChatResponse {
        usage: Usage {
            prompt_tokens: approx_tokens(&request.flattened()),
            completion_tokens: approx_tokens(&content),
        },
        content,
        latency: Duration::ZERO,
    }
}

/// One scripted rule. Exactly one of `contains` (plain substring) or
/// `pattern` (regular expression) is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    pub default_response: String,
}

impl MockScript {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GatewayError::Script(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Script(format!("{}: {e}", path.display())))?;
        let mut script = Self::from_toml_str(&text)?;
        if script.name.is_empty() {
            script.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(script)
    }

    pub fn with_default(default_response: impl Into<String>) -> Self {
        MockScript {
            name: "inline".into(),
            rules: Vec::new(),
            default_response: default_response.into(),
        }
    }
}

enum Matcher {
    Contains(String),
    Pattern(Regex),
}

/// Applies a [`MockScript`]: the first rule matching the flattened prompt wins.
pub struct MockBackend {
    name: String,
    rules: Vec<(Matcher, String)>,
    default_response: String,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self> {
        let mut rules = Vec::with_capacity(script.rules.len());
        for (i, rule) in script.rules.into_iter().enumerate() {
            let matcher = match (rule.contains, rule.pattern) {
                (Some(s), None) => Matcher::Contains(s),
                (None, Some(p)) => Matcher::Pattern(
                    Regex::new(&p).map_err(|e| GatewayError::Script(format!("rule {i}: {e}")))?,
                ),
                _ => {
                    return Err(GatewayError::Script(format!(
                        "rule {i} must set exactly one of `contains` or `pattern`"
                    )))
                }
            };
            rules.push((matcher, rule.response));
        }
        Ok(MockBackend {
            name: script.name,
            rules,
            default_response: script.default_response,
        })
    }

    fn respond(&self, prompt: &str) -> &str {
        self.rules
            .iter()
            .find(|(m, _)| match m {
                Matcher::Contains(s) => prompt.contains(s.as_str()),
                Matcher::Pattern(re) => re.is_match(prompt),
            })
            .map_or(self.default_response.as_str(), |(_, r)| r.as_str())
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        format!("mock:{}", self.name)
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        Ok(response(request, self.respond(&request.flattened()).to_string()))
    }
}

static STATISTIC: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"purchase probability ([01](?:\.\d+)?)").unwrap());

/// Every `purchase probability X` statistic quoted in `text`, in order.
pub fn extract_statistics(text: &str) -> Vec<f64> {
    STATISTIC
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

fn final_line(p: f64) -> String {
    format!("Final probability: {:.1}%", p * 100.0)
}

/// Answers with the first retrieved statistic in the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvidenceFollowing;

impl Backend for EvidenceFollowing {
    fn id(&self) -> String {
        "mock:evidence".into()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let content = match extract_statistics(&request.flattened()).first() {
            Some(&p) => format!(
                "The survey statistic for my most significant factor is my reference point.\n{}",
                final_line(p)
            ),
            None => "I have no survey statistic to rely on.".to_string(),
        };
        Ok(response(request, content))
    }
}

/// Answers with the arithmetic mean of all retrieved statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvidenceAveraging;

impl Backend for EvidenceAveraging {
    fn id(&self) -> String {
        "mock:average".into()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let stats = extract_statistics(&request.flattened());
        let content = if stats.is_empty() {
            "I have no survey statistic to rely on.".to_string()
        } else {
            let mean = stats.iter().sum::<f64>() / stats.len() as f64;
            format!(
                "I weigh the {} retrieved statistics equally.\n{}",
                stats.len(),
                final_line(mean)
            )
        };
        Ok(response(request, content))
    }
}

/// Always answers with the same probability.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBackend {
    probability: f64,
}

impl ConstantBackend {
    pub fn new(probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(GatewayError::Config(format!(
                "constant probability {probability} outside [0, 1]"
            )));
        }
        Ok(ConstantBackend { probability })
    }
}

impl Backend for ConstantBackend {
    fn id(&self) -> String {
        format!("mock:constant:{}", self.probability)
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        Ok(response(
            request,
            format!(
                "Flooding is a serious risk and insurance gives peace of mind.\n{}",
                final_line(self.probability)
            ),
        ))
    }
}

/// Wraps a backend and counts completed calls.
pub struct CountingBackend {
    inner: Arc<dyn Backend>,
    calls: AtomicUsize,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn Backend>) -> Self {
        CountingBackend {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for CountingBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn send(&self, request: &ChatRequest) -> Result<ChatResponse> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}
