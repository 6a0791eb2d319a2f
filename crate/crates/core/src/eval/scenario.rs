//! Extrapolation scenarios: profiles that differ in details the survey does
//! not cover, checked against an expected ordering.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::agent::{Agent, EpisodicMemory, UserProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfile {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub reference_probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSuite {
    pub scenario_id: String,
    #[serde(default)]
    pub notes: String,
    /// Bundled mock script that replays reference responses.
    #[serde(default)]
    pub mock: Option<String>,
    /// Strict (`>`) or weak (`>=`) ordering.
    #[serde(default = "default_strict")]
    pub strict: bool,
    /// Profile ids from highest to lowest expected probability.
    pub expected_ordering: Vec<String>,
    pub profiles: Vec<ScenarioProfile>,
}

fn default_strict() -> bool {
    true
}

impl ScenarioSuite {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let suite: ScenarioSuite = toml::from_str(text)?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = crate::fixtures::suite(name).ok_or_else(|| EvalError::Suite(format!("no bundled suite `{name}`")))?;
        Self::from_toml_str(text)
    }

    fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(EvalError::Suite(format!("suite `{}` has no profiles", self.scenario_id)));
        }
        let mut ids: Vec<&str> = self.profiles.iter().map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::Suite(format!("suite `{}` repeats a profile id", self.scenario_id)));
        }
        for id in &self.expected_ordering {
            if ids.binary_search(&id.as_str()).is_err() {
                return Err(EvalError::Suite(format!("ordering names unknown profile `{id}`")));
            }
        }
        if self.profiles.iter().any(|p| p.reference_probability.is_some_and(|r| !(0.0..=1.0).contains(&r))) {
            return Err(EvalError::Suite("reference probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub id: String,
    pub predicted: Option<f64>,
    pub reference: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_id: String,
    pub backend_id: String,
    pub results: Vec<ScenarioResult>,
    /// (higher, lower) pairs whose predictions break the expected ordering.
    pub violations: Vec<(String, String)>,
    pub ordering_satisfied: bool,
}

/// One decision per profile, then an ordering check over every pair listed
/// in `expected_ordering`.
pub fn run_scenarios(suite: &ScenarioSuite, agent: &Agent) -> Result<ScenarioReport> {
    let results: Vec<ScenarioResult> = suite
        .profiles
        .iter()
        .map(|p| {
            let decision = agent.decide(&UserProfile::new(&p.id, &p.text), &EpisodicMemory::new(&p.id), None);
            ScenarioResult {
                id: p.id.clone(),
                predicted: decision.as_ref().ok().map(|d| d.probability),
                reference: p.reference_probability,
                error: decision.err().map(|e| e.to_string()),
            }
        })
        .collect();
    let value = |id: &str| results.iter().find(|r| r.id == id).and_then(|r| r.predicted);
    let mut violations = Vec::new();
    for (i, hi) in suite.expected_ordering.iter().enumerate() {
        for lo in &suite.expected_ordering[i + 1..] {
            let ok = match (value(hi), value(lo)) {
                (Some(a), Some(b)) if suite.strict => a > b,
                (Some(a), Some(b)) => a >= b,
                _ => false,
            };
            if !ok {
                violations.push((hi.clone(), lo.clone()));
            }
        }
    }
    Ok(ScenarioReport {
        scenario_id: suite.scenario_id.clone(),
        backend_id: agent.backend_id(),
        ordering_satisfied: violations.is_empty(),
        results,
        violations,
    })
}
