use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AgentError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub variable: String,
    pub level: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub probability: f64,
    pub rationale: String,
    pub raw_response: String,
    pub evidence_used: Vec<EvidenceRef>,
}

static PERCENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?)\s?%").unwrap());
static NEAR_PROBABILITY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)probability\W{0,3}(?:\w+\W{1,3}){0,3}?(\d*\.\d+|\d+)\b|(\d*\.\d+)\s+probability").unwrap()
});
static LABEL_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*\**final probability\**\s*:?\s*\d+(?:\.\d+)?\s?%\s*\**\s*$").unwrap());

/// Extracts the final probability from a model response.
///
/// Precedence: the last `N%` / `N.M%` token; failing that, the last bare
/// number in `[0, 1]` next to the word "probability". Returns the probability
/// and the rationale (the response minus a trailing `Final probability` line).
pub fn parse_decision(raw: &str) -> Result<(f64, String)> {
    let p = if let Some(m) = PERCENT.captures_iter(raw).last() {
        let v: f64 = m[1]
            .parse()
            .map_err(|_| AgentError::Parse(format!("bad percentage `{}`", &m[0])))?;
        if v > 100.0 {
            return Err(AgentError::Parse(format!("percentage {v} exceeds 100")));
        }
        v / 100.0
    } else {
        NEAR_PROBABILITY
            .captures_iter(raw)
            .filter_map(|c| c.get(1).or_else(|| c.get(2))?.as_str().parse::<f64>().ok())
            .filter(|v| (0.0..=1.0).contains(v))
            .last()
            .ok_or_else(|| AgentError::Parse(excerpt(raw)))?
    };
    let rationale = LABEL_LINE.replace_all(raw, "").trim().to_string();
    Ok((p, rationale))
}

/// Formats a decision as the agent is asked to: rationale, then a final line
/// with the percentage at one decimal.
pub fn render_decision(probability: f64, rationale: &str) -> String {
    format!("{}\nFinal probability: {:.1}%", rationale.trim(), probability * 100.0)
}

fn excerpt(raw: &str) -> String {
    let s: String = raw.chars().take(120).collect();
    format!("no percentage in response `{s}`")
}
