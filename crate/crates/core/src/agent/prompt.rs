//! The five-part decision prompt: role definition, retrieved evidence, task
//! goal, chain of thought, guidance notes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::memory::EpisodicMemory;
use super::perception::ParsedProfile;
use super::{AgentError, Result};
use crate::schema::SignificanceTier;
use crate::store::RetrievalResult;

/// Editable wording of each component, loaded from a TOML asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role_definition: String,
    pub evidence_heading: String,
    pub memory_heading: String,
    pub task_goal: String,
    pub chain_of_thought: Vec<String>,
    pub guidance_notes: Vec<String>,
    pub output_format: String,
    pub format_reminder: String,
}

impl PromptTemplate {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let t: PromptTemplate = toml::from_str(text).map_err(|e| AgentError::Template(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(crate::fixtures::PROMPT_TEMPLATE).expect("bundled template is valid")
    }

    fn validate(&self) -> Result<()> {
        let empty = |s: &str| s.trim().is_empty();
        if empty(&self.role_definition) || empty(&self.task_goal) || empty(&self.output_format) {
            return Err(AgentError::Template("role, task goal, and output format must be non-empty".into()));
        }
        if self.chain_of_thought.len() != 4 || self.chain_of_thought.iter().any(|s| empty(s)) {
            return Err(AgentError::Template("chain of thought needs exactly four non-empty stages".into()));
        }
        if self.guidance_notes.len() < 3 || self.guidance_notes.iter().any(|s| empty(s)) {
            return Err(AgentError::Template("at least three non-empty guidance notes are required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceLine {
    pub variable: String,
    pub level: String,
    pub probability: f64,
    pub tier: SignificanceTier,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub role_definition: String,
    /// Statistic lines, highest significance tier first.
    pub retrieved_evidence: Vec<EvidenceLine>,
    /// Earlier decisions, oldest first; rendered inside the evidence section.
    pub prior_decisions: Vec<String>,
    pub task_goal: String,
    pub chain_of_thought: Vec<String>,
    pub guidance_notes: Vec<String>,
    evidence_heading: String,
    memory_heading: String,
}

pub const SECTION_TITLES: [&str; 5] = [
    "## Role definition",
    "## Retrieved evidence",
    "## Task goal",
    "## Chain of thought",
    "## Guidance notes",
];

impl PromptBundle {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(SECTION_TITLES[0]);
        out.push('\n');
        out.push_str(self.role_definition.trim());
        out.push_str("\n\n");
        out.push_str(SECTION_TITLES[1]);
        out.push('\n');
        out.push_str(&self.evidence_heading);
        out.push('\n');
        for e in &self.retrieved_evidence {
            out.push_str(&format!("- {}\n", e.text));
        }
        if !self.prior_decisions.is_empty() {
            out.push_str(&self.memory_heading);
            out.push('\n');
            for d in &self.prior_decisions {
                out.push_str(&format!("- {d}\n"));
            }
        }
        out.push('\n');
        out.push_str(SECTION_TITLES[2]);
        out.push('\n');
        out.push_str(self.task_goal.trim());
        out.push_str("\n\n");
        out.push_str(SECTION_TITLES[3]);
        out.push('\n');
        for stage in &self.chain_of_thought {
            out.push_str(stage);
            out.push('\n');
        }
        out.push('\n');
        out.push_str(SECTION_TITLES[4]);
        out.push('\n');
        for (i, note) in self.guidance_notes.iter().enumerate() {
            out.push_str(&format!("{}. {note}\n", i + 1));
        }
        out
    }
}

fn tier_rank(t: SignificanceTier) -> u8 {
    match t {
        SignificanceTier::High => 0,
        SignificanceTier::Medium => 1,
        SignificanceTier::Low => 2,
        SignificanceTier::Minimal => 3,
    }
}

/// Builds the prompt bundle. Each parsed factor takes the first evidence
/// result for its variable; a factor without evidence is an error.
pub fn assemble_prompt(
    parsed: &ParsedProfile,
    evidence: &[RetrievalResult],
    memory: &EpisodicMemory,
    template: &PromptTemplate,
) -> Result<PromptBundle> {
    let mut lines: Vec<(usize, EvidenceLine)> = Vec::with_capacity(parsed.factors.len());
    for (order, factor) in parsed.factors.iter().enumerate() {
        let hit = evidence
            .iter()
            .find(|r| r.document.variable == factor.variable)
            .ok_or_else(|| AgentError::Assembly(format!("no evidence retrieved for `{}`", factor.variable)))?;
        let d = &hit.document;
        lines.push((
            order,
            EvidenceLine {
                variable: d.variable.clone(),
                level: d.level_label.clone(),
                probability: d.probability,
                tier: d.tier,
                text: d.text.clone(),
            },
        ));
    }
    lines.sort_by_key(|(order, l)| (tier_rank(l.tier), *order));
    let prior_decisions = memory
        .records()
        .iter()
        .map(|r| {
            format!(
                "[{}] {} => {:.1}%",
                r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                r.event.trim(),
                r.decision.probability * 100.0
            )
        })
        .collect();
    Ok(PromptBundle {
        role_definition: template.role_definition.clone(),
        retrieved_evidence: lines.into_iter().map(|(_, l)| l).collect(),
        prior_decisions,
        task_goal: format!("{}\n{}", template.task_goal.trim(), template.output_format.trim()),
        chain_of_thought: template.chain_of_thought.clone(),
        guidance_notes: template.guidance_notes.clone(),
        evidence_heading: template.evidence_heading.clone(),
        memory_heading: template.memory_heading.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::decision::AgentDecision;
    use crate::agent::perception::{perceive_rules, UserProfile};
    use crate::schema::FeatureSchema;
    use crate::store::{build_index, survey_corpus, HashEmbedder};
    use chrono::{TimeZone, Utc};

    fn evidence_for(parsed: &ParsedProfile) -> Vec<RetrievalResult> {
        let idx = build_index(survey_corpus(), &HashEmbedder).unwrap();
        parsed
            .factors
            .iter()
            .map(|f| {
                idx.retrieve_in(&HashEmbedder, &format!("{} {}", f.variable, f.level_label), 1, Some(&f.variable))
                    .unwrap()
                    .remove(0)
            })
            .collect()
    }

    fn four_factor() -> ParsedProfile {
        perceive_rules(
            &UserProfile::new("p", "33-year-old male, bachelor's degree, $52,000/year"),
            &FeatureSchema::survey(),
        )
        .unwrap()
    }

    #[test]
    fn high_tier_evidence_comes_first() {
        let parsed = four_factor();
        let bundle = assemble_prompt(&parsed, &evidence_for(&parsed), &EpisodicMemory::new("a"), &PromptTemplate::bundled()).unwrap();
        let vars: Vec<&str> = bundle.retrieved_evidence.iter().map(|e| e.variable.as_str()).collect();
        assert_eq!(vars, ["education", "income", "age", "gender"]);
    }

    #[test]
    fn sections_render_in_order_without_memory_block() {
        let parsed = four_factor();
        let bundle = assemble_prompt(&parsed, &evidence_for(&parsed), &EpisodicMemory::new("a"), &PromptTemplate::bundled()).unwrap();
        let text = bundle.render();
        let positions: Vec<usize> = SECTION_TITLES.iter().map(|t| text.find(t).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(!text.contains(&PromptTemplate::bundled().memory_heading));
        assert_eq!(bundle.chain_of_thought.len(), 4);
        assert_eq!(bundle.guidance_notes.len(), 3);
    }

    #[test]
    fn memory_is_rendered_oldest_first() {
        let parsed = four_factor();
        let mut memory = EpisodicMemory::new("a");
        for (i, p) in [0.30, 0.25, 0.40].iter().enumerate() {
            let decision = AgentDecision {
                probability: *p,
                rationale: String::new(),
                raw_response: String::new(),
                evidence_used: vec![],
            };
            let ts = Utc.with_ymd_and_hms(2024, 1, 1 + i as u32, 0, 0, 0).unwrap();
            memory.append(&format!("event {i}"), decision, String::new(), ts).unwrap();
        }
        let bundle = assemble_prompt(&parsed, &evidence_for(&parsed), &memory, &PromptTemplate::bundled()).unwrap();
        assert_eq!(bundle.prior_decisions.len(), 3);
        assert!(bundle.prior_decisions[0].contains("event 0") && bundle.prior_decisions[0].ends_with("30.0%"));
        assert!(bundle.prior_decisions[2].contains("event 2"));
        let text = bundle.render();
        let evidence_at = text.find(SECTION_TITLES[1]).unwrap();
        let memory_at = text.find("event 0").unwrap();
        assert!(evidence_at < memory_at && memory_at < text.find(SECTION_TITLES[2]).unwrap());
    }

    #[test]
    fn missing_evidence_is_an_error() {
        let parsed = four_factor();
        let mut ev = evidence_for(&parsed);
        ev.pop();
        assert!(matches!(
            assemble_prompt(&parsed, &ev, &EpisodicMemory::new("a"), &PromptTemplate::bundled()),
            Err(AgentError::Assembly(_))
        ));
    }

    #[test]
    fn template_structure_is_checked() {
        let mut t = PromptTemplate::bundled();
        t.chain_of_thought.pop();
        let text = toml::to_string(&t).unwrap();
        assert!(PromptTemplate::from_toml_str(&text).is_err());
    }
}
