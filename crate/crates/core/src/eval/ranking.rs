//! Third-person discriminative ranking without retrieval evidence.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::cases::{factor_sentence, EVAL_CITY_SENTENCE};
use super::metrics::kendall_tau;
use super::{EvalError, Result};
use crate::agent::UserProfile;
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::schema::FeatureSchema;
use crate::synth::ProbabilityTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedProfile {
    pub label: String,
    pub level: String,
    pub profile: UserProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingCase {
    pub factor: String,
    pub display: String,
    pub profiles: Vec<RankedProfile>,
    /// Labels by descending benchmark probability.
    pub expected_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub factor: String,
    pub backend_id: String,
    pub expected_order: Vec<String>,
    pub predicted_order: Vec<String>,
    pub exact: bool,
    pub tau: f64,
    pub raw_response: String,
}

/// Profiles labelled A, B, ... in schema level order, differing only in `factor`.
pub fn ranking_case(schema: &FeatureSchema, benchmark: &[ProbabilityTable], factor: &str) -> Result<RankingCase> {
    let var = schema.variable(factor).map_err(|e| EvalError::Input(e.to_string()))?;
    let table = benchmark
        .iter()
        .find(|t| t.variable == factor)
        .ok_or_else(|| EvalError::Input(format!("no benchmark table for `{factor}`")))?;
    if var.levels.len() > 26 {
        return Err(EvalError::Input(format!("`{factor}` has too many levels to label")));
    }
    let mut profiles = Vec::new();
    let mut probs = Vec::new();
    for (i, level) in var.levels.iter().enumerate() {
        let p = table
            .probability(&level.label)
            .ok_or_else(|| EvalError::Input(format!("benchmark has no value for {factor} = {}", level.label)))?;
        let label = char::from(b'A' + i as u8).to_string();
        let text = format!("{} {EVAL_CITY_SENTENCE}", factor_sentence(factor, &level.label)?);
        profiles.push(RankedProfile {
            profile: UserProfile::new(format!("{factor}/{label}"), text),
            label,
            level: level.label.clone(),
        });
        probs.push(p);
    }
    let mut order: Vec<usize> = (0..profiles.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    Ok(RankingCase {
        factor: factor.to_string(),
        display: var.display.clone(),
        expected_order: order.iter().map(|&i| profiles[i].label.clone()).collect(),
        profiles,
    })
}

static RANKING_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?im)^\W*ranking\W*:\s*(.+)$").unwrap());
static LABEL_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:[Pp]erson\s+)?([A-Z])\b").unwrap());

/// Reads the last `Ranking:` line as a permutation of `labels`.
pub fn parse_ranking(text: &str, labels: &[String]) -> Result<Vec<String>> {
    let line = RANKING_LINE
        .captures_iter(text)
        .last()
        .ok_or_else(|| EvalError::Task("response has no `Ranking:` line".into()))?;
    let order: Vec<String> = LABEL_TOKEN.captures_iter(&line[1]).map(|c| c[1].to_string()).collect();
    let mut sorted = order.clone();
    sorted.sort();
    let mut expected = labels.to_vec();
    expected.sort();
    if sorted != expected {
        return Err(EvalError::Task(format!(
            "ranking `{}` is not a permutation of {}",
            line[1].trim(),
            labels.join(", ")
        )));
    }
    Ok(order)
}

fn ranking_request(case: &RankingCase) -> ChatRequest {
    let system = format!(
        "Below are {} people who are identical except for their {}. Rank them in descending order \
of their probability of purchasing flood insurance. Finish with one line of the form: Ranking: A > B > ...",
        case.profiles.len(),
        case.display.to_lowercase()
    );
    let people: Vec<String> = case
        .profiles
        .iter()
        .map(|p| format!("Person {}: {}", p.label, p.profile.text))
        .collect();
    ChatRequest::new(vec![ChatMessage::system(system), ChatMessage::user(people.join("\n"))])
}

pub fn run_discriminative(case: &RankingCase, llm: &dyn Backend) -> Result<RankingResult> {
    let reply = llm.complete(&ranking_request(case))?.content;
    let labels: Vec<String> = case.profiles.iter().map(|p| p.label.clone()).collect();
    let predicted = parse_ranking(&reply, &labels)?;
    let tau = kendall_tau(&case.expected_order, &predicted)?;
    Ok(RankingResult {
        factor: case.factor.clone(),
        backend_id: llm.id(),
        exact: predicted == case.expected_order,
        expected_order: case.expected_order.clone(),
        predicted_order: predicted,
        tau,
        raw_response: reply,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockScript};
    use crate::synth::published_targets;

    fn mock(reply: &str) -> MockBackend {
        MockBackend::new(MockScript::with_default(reply)).unwrap()
    }

    #[test]
    fn age_oldest_first_is_exact() {
        let case = ranking_case(&FeatureSchema::survey(), &published_targets(), "age").unwrap();
        let r = run_discriminative(&case, &mock("Older people worry more.\nRanking: F > E > D > C > B > A")).unwrap();
        assert!(r.exact);
        assert_eq!(r.tau, 1.0);
    }

    #[test]
    fn reversed_education_scores_minus_one() {
        let case = ranking_case(&FeatureSchema::survey(), &published_targets(), "education").unwrap();
        assert_eq!(case.expected_order, ["D", "C", "B", "A"]);
        let r = run_discriminative(&case, &mock("Ranking: Person A > Person B > Person C > Person D")).unwrap();
        assert!(!r.exact);
        assert_eq!(r.tau, -1.0);
    }

    #[test]
    fn non_permutations_are_task_errors() {
        let labels: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        assert!(parse_ranking("Ranking: A > B > C", &labels).is_err());
        assert!(parse_ranking("Ranking: A > B > C > C", &labels).is_err());
        assert!(parse_ranking("A then B", &labels).is_err());
        assert_eq!(parse_ranking("Ranking: D, C, A, B", &labels).unwrap(), ["D", "C", "A", "B"]);
    }
}
