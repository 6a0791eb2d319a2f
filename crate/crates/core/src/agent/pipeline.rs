//! Orchestration: perceive, retrieve, assemble, reason, parse, remember.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::decision::{parse_decision, AgentDecision, EvidenceRef};
use super::memory::{EpisodicMemory, TimedEvent};
use super::perception::{perceive, ParsedFactor, ParsedProfile, UserProfile};
use super::prompt::{assemble_prompt, PromptBundle, PromptTemplate};
use super::{AgentError, Result};
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::schema::FeatureSchema;
use crate::store::{Embedder, FactorIndex, QueryNormalizer, RetrievalResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub k_per_factor: usize,
    pub max_attempts: usize,
    pub samples_per_decision: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            k_per_factor: 1,
            max_attempts: 3,
            samples_per_decision: 1,
            temperature: 0.0,
            max_tokens: 1024,
            model_id: String::new(),
        }
    }
}

pub struct Agent {
    schema: FeatureSchema,
    index: Arc<FactorIndex>,
    embedder: Arc<dyn Embedder>,
    llm: Arc<dyn Backend>,
    perception_llm: Option<Arc<dyn Backend>>,
    template: PromptTemplate,
    config: AgentConfig,
    normalizer: QueryNormalizer,
}

impl Agent {
    pub fn new(
        schema: FeatureSchema,
        index: Arc<FactorIndex>,
        embedder: Arc<dyn Embedder>,
        llm: Arc<dyn Backend>,
    ) -> Result<Self> {
        if embedder.id() != index.embedder_id() {
            return Err(AgentError::Store(crate::store::StoreError::Index(format!(
                "index was built with embedder `{}`, agent uses `{}`",
                index.embedder_id(),
                embedder.id()
            ))));
        }
        let normalizer = QueryNormalizer::new(&schema);
        Ok(Agent {
            schema,
            index,
            embedder,
            llm,
            perception_llm: None,
            template: PromptTemplate::bundled(),
            config: AgentConfig::default(),
            normalizer,
        })
    }

    pub fn with_template(mut self, template: PromptTemplate) -> Self {
        self.template = template;
        self
    }

    pub fn with_config(mut self, config: AgentConfig) -> Result<Self> {
        if config.k_per_factor == 0 || config.max_attempts == 0 || config.samples_per_decision == 0 {
            return Err(AgentError::Assembly(
                "k_per_factor, max_attempts and samples_per_decision must be at least 1".into(),
            ));
        }
        self.config = config;
        Ok(self)
    }

    /// Uses an LLM for perception in addition to the rules.
    pub fn with_perception_llm(mut self, llm: Arc<dyn Backend>) -> Self {
        self.perception_llm = Some(llm);
        self
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn backend_id(&self) -> String {
        self.llm.id()
    }

    pub fn perceive(&self, profile: &UserProfile) -> Result<ParsedProfile> {
        perceive(profile, &self.schema, self.perception_llm.as_deref())
    }

    fn query_for(&self, factor: &ParsedFactor) -> String {
        let display = self
            .schema
            .variable(&factor.variable)
            .map(|v| v.display.as_str())
            .unwrap_or(factor.variable.as_str());
        self.normalizer
            .annotate(&format!("{display} {} | {}", factor.level_label, factor.raw_phrase))
    }

    /// One query per factor, searched within that factor's variable. The
    /// document for the perceived level is taken when it ranks among the
    /// results, otherwise the top hits.
    pub fn retrieve(&self, parsed: &ParsedProfile) -> Result<Vec<RetrievalResult>> {
        let mut evidence = Vec::new();
        for factor in &parsed.factors {
            let n_levels = self.schema.variable(&factor.variable).map(|v| v.n_levels()).unwrap_or(1);
            let hits = self.index.retrieve_in(
                self.embedder.as_ref(),
                &self.query_for(factor),
                n_levels.max(self.config.k_per_factor),
                Some(&factor.variable),
            )?;
            if hits.is_empty() {
                return Err(AgentError::Assembly(format!("index has no documents for `{}`", factor.variable)));
            }
            let wanted = crate::schema::normalize_label(&factor.level_label);
            let mut chosen: Vec<RetrievalResult> = Vec::with_capacity(self.config.k_per_factor);
            if let Some(hit) = hits.iter().find(|h| crate::schema::normalize_label(&h.document.level_label) == wanted) {
                chosen.push(hit.clone());
            }
            for h in &hits {
                if chosen.len() >= self.config.k_per_factor {
                    break;
                }
                if !chosen.iter().any(|c| c.document.key() == h.document.key()) {
                    chosen.push(h.clone());
                }
            }
            evidence.extend(chosen);
        }
        Ok(evidence)
    }

    pub fn prompt(&self, profile: &UserProfile, memory: &EpisodicMemory) -> Result<(PromptBundle, ParsedProfile)> {
        let parsed = self.perceive(profile)?;
        let evidence = self.retrieve(&parsed)?;
        Ok((assemble_prompt(&parsed, &evidence, memory, &self.template)?, parsed))
    }

    fn request(&self, bundle: &PromptBundle, profile: &UserProfile, event: Option<&TimedEvent>, reminders: usize) -> ChatRequest {
        let mut user = format!("Profile:\n{}", profile.text.trim());
        if let Some(ev) = event {
            user.push_str(&format!(
                "\n\nNew event ({}):\n{}",
                ev.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                ev.text.trim()
            ));
        }
        for _ in 0..reminders {
            user.push_str("\n\n");
            user.push_str(&self.template.format_reminder);
        }
        let mut req = ChatRequest::new(vec![ChatMessage::system(bundle.render()), ChatMessage::user(user)]);
        req.temperature = self.config.temperature;
        req.max_tokens = self.config.max_tokens;
        req.model_id = self.config.model_id.clone();
        req
    }

    fn sample(&self, bundle: &PromptBundle, profile: &UserProfile, event: Option<&TimedEvent>) -> Result<(f64, String, String)> {
        let mut responses = Vec::new();
        let mut last_error = String::new();
        for attempt in 0..self.config.max_attempts {
            let reply = self.llm.complete(&self.request(bundle, profile, event, attempt))?.content;
            match parse_decision(&reply) {
                Ok((p, rationale)) => return Ok((p, rationale, reply)),
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "unparseable decision");
                    last_error = e.to_string();
                    responses.push(reply);
                }
            }
        }
        Err(AgentError::Decision { attempts: self.config.max_attempts, responses, last_error })
    }

    /// A single decision for `profile`, given prior memory and an optional new event.
    pub fn decide(&self, profile: &UserProfile, memory: &EpisodicMemory, event: Option<&TimedEvent>) -> Result<AgentDecision> {
        let (bundle, _) = self.prompt(profile, memory)?;
        let evidence_used: Vec<EvidenceRef> = bundle
            .retrieved_evidence
            .iter()
            .map(|e| EvidenceRef { variable: e.variable.clone(), level: e.level.clone(), probability: e.probability })
            .collect();
        let mut total = 0.0;
        let mut first: Option<(String, String)> = None;
        for _ in 0..self.config.samples_per_decision {
            let (p, rationale, raw) = self.sample(&bundle, profile, event)?;
            total += p;
            first.get_or_insert((rationale, raw));
        }
        let (rationale, raw_response) = first.expect("at least one sample");
        Ok(AgentDecision {
            probability: total / self.config.samples_per_decision as f64,
            rationale,
            raw_response,
            evidence_used,
        })
    }

    /// Baseline decision from the bare profile, then one decision per event
    /// with all earlier events in memory. Returns `events.len() + 1` decisions.
    pub fn run_trajectory(
        &self,
        profile: &UserProfile,
        events: &[TimedEvent],
        memory: &mut EpisodicMemory,
    ) -> Result<Vec<AgentDecision>> {
        if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(AgentError::Memory("trajectory events are not sorted by timestamp".into()));
        }
        let wrap = |step: usize| move |e: AgentError| AgentError::Trajectory { step, source: Box::new(e) };
        let mut decisions = Vec::with_capacity(events.len() + 1);
        decisions.push(self.decide(profile, memory, None).map_err(wrap(0))?);
        for (i, ev) in events.iter().enumerate() {
            let d = self.decide(profile, memory, Some(ev)).map_err(wrap(i + 1))?;
            memory
                .append(&ev.text, d.clone(), d.rationale.clone(), ev.timestamp)
                .map_err(wrap(i + 1))?;
            decisions.push(d);
        }
        Ok(decisions)
    }
}
