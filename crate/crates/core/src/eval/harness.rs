//! Case execution with repetitions and the report reduction.

use serde::{Deserialize, Serialize};

use super::cases::{bivariate_cases, marginal_cases, CaseKind, EvalCase};
use super::metrics::{mean_absolute_error, r_squared};
use super::{EvalError, Result};
use crate::agent::{parse_decision, Agent, EpisodicMemory};
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::synth::{BivariateTable, ProbabilityTable};

/// Bare first-person prompt for the role-play baseline: no evidence and no
/// reasoning scaffold.
pub const ROLEPLAY_INSTRUCTIONS: &str = "Pretend to be the person described by the user. \
How likely are you to buy flood insurance this year? Answer with a percentage between 0% and 100%.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub reps: usize,
    pub concurrency: usize,
    pub temperature: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { reps: 1, concurrency: 4, temperature: 0.0 }
    }
}

impl EvalOptions {
    pub fn with_reps(reps: usize) -> Self {
        EvalOptions { reps, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.concurrency == 0 {
            return Err(EvalError::Input("reps and concurrency must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub kind: CaseKind,
    pub source: String,
    pub levels: Vec<(String, String)>,
    pub benchmark: f64,
    /// Mean over repetitions; `None` when any repetition failed.
    pub predicted: Option<f64>,
    pub samples: Vec<f64>,
    pub error: Option<String>,
}

impl CaseOutcome {
    pub fn is_complete(&self) -> bool {
        self.predicted.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub backend_id: String,
    pub reps: usize,
    pub cases: Vec<CaseOutcome>,
    pub r_squared: Option<f64>,
    pub mae: Option<f64>,
    /// Fraction of cases with a prediction.
    pub completeness: f64,
    pub metric_note: Option<String>,
}

impl EvalReport {
    /// Metrics over complete cases only.
    pub fn from_outcomes(task: &str, backend_id: String, reps: usize, cases: Vec<CaseOutcome>) -> Self {
        let (predicted, truth): (Vec<f64>, Vec<f64>) =
            cases.iter().filter_map(|c| Some((c.predicted?, c.benchmark))).unzip();
        let completeness = if cases.is_empty() { 0.0 } else { predicted.len() as f64 / cases.len() as f64 };
        let mut notes = Vec::new();
        let r2 = r_squared(&predicted, &truth).map_err(|e| notes.push(format!("R²: {e}"))).ok();
        let mae = mean_absolute_error(&predicted, &truth).map_err(|e| notes.push(format!("MAE: {e}"))).ok();
        EvalReport {
            task: task.to_string(),
            backend_id,
            reps,
            cases,
            r_squared: r2,
            mae,
            completeness,
            metric_note: (!notes.is_empty()).then(|| notes.join("; ")),
        }
    }

    pub fn incomplete(&self) -> impl Iterator<Item = &CaseOutcome> {
        self.cases.iter().filter(|c| !c.is_complete())
    }

    pub fn predictions(&self) -> Vec<Option<f64>> {
        self.cases.iter().map(|c| c.predicted).collect()
    }
}

/// Runs `reps` calls of `once` per case on a pool of `concurrency` workers.
/// Output order follows `cases`.
pub fn run_cases<F>(cases: &[EvalCase], options: &EvalOptions, once: F) -> Result<Vec<CaseOutcome>>
where
    F: Fn(&EvalCase) -> std::result::Result<f64, String> + Sync,
{
    use rayon::prelude::*;
    options.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency)
        .build()
        .map_err(|e| EvalError::Input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        cases
            .par_iter()
            .map(|case| {
                let mut samples = Vec::with_capacity(options.reps);
                let mut errors = Vec::new();
                for rep in 0..options.reps {
                    match once(case) {
                        Ok(p) => samples.push(p),
                        Err(e) => errors.push(format!("rep {rep}: {e}")),
                    }
                }
                let predicted =
                    errors.is_empty().then(|| samples.iter().sum::<f64>() / samples.len() as f64);
                if !errors.is_empty() {
                    tracing::warn!(case = %case.case_id, failures = errors.len(), "incomplete case");
                }
                CaseOutcome {
                    case_id: case.case_id.clone(),
                    kind: case.kind,
                    source: case.source.clone(),
                    levels: case.levels.clone(),
                    benchmark: case.benchmark_probability,
                    predicted,
                    samples,
                    error: (!errors.is_empty()).then(|| errors.join("; ")),
                }
            })
            .collect()
    }))
}

fn agent_once(agent: &Agent) -> impl Fn(&EvalCase) -> std::result::Result<f64, String> + Sync + '_ {
    move |case| {
        agent
            .decide(&case.profile, &EpisodicMemory::new(&case.case_id), None)
            .map(|d| d.probability)
            .map_err(|e| e.to_string())
    }
}

pub fn run_marginal_eval(agent: &Agent, benchmark: &[ProbabilityTable], options: &EvalOptions) -> Result<EvalReport> {
    let cases = marginal_cases(agent.schema(), benchmark)?;
    let outcomes = run_cases(&cases, options, agent_once(agent))?;
    Ok(EvalReport::from_outcomes("marginal", agent.backend_id(), options.reps, outcomes))
}

pub fn run_bivariate_eval(
    agent: &Agent,
    benchmark: &[BivariateTable],
    pairs: &[(String, String)],
    options: &EvalOptions,
) -> Result<EvalReport> {
    let cases = bivariate_cases(agent.schema(), benchmark, pairs)?;
    let outcomes = run_cases(&cases, options, agent_once(agent))?;
    Ok(EvalReport::from_outcomes("bivariate", agent.backend_id(), options.reps, outcomes))
}

/// First-person estimates from the bare profile, averaged over repetitions.
pub fn run_roleplay_baseline(cases: &[EvalCase], llm: &dyn Backend, options: &EvalOptions) -> Result<EvalReport> {
    let outcomes = run_cases(cases, options, |case| {
        let mut request = ChatRequest::new(vec![
            ChatMessage::system(ROLEPLAY_INSTRUCTIONS),
            ChatMessage::user(case.profile.text.clone()),
        ]);
        request.temperature = options.temperature;
        let reply = llm.complete(&request).map_err(|e| e.to_string())?;
        parse_decision(&reply.content).map(|(p, _)| p).map_err(|e| e.to_string())
    })?;
    Ok(EvalReport::from_outcomes("baseline", llm.id(), options.reps, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ConstantBackend, CountingBackend, EvidenceAveraging, EvidenceFollowing, MockBackend, MockScript};
    use crate::schema::FeatureSchema;
    use crate::store::{build_index, survey_corpus, HashEmbedder};
    use crate::synth::published_targets;
    use std::sync::Arc;

    fn agent(llm: Arc<dyn Backend>) -> Agent {
        let index = Arc::new(build_index(survey_corpus(), &HashEmbedder).unwrap());
        Agent::new(FeatureSchema::survey(), index, Arc::new(HashEmbedder), llm).unwrap()
    }

    #[test]
    fn evidence_following_marginal_eval_is_lossless() {
        let report = run_marginal_eval(&agent(Arc::new(EvidenceFollowing)), &published_targets(), &EvalOptions::default()).unwrap();
        assert_eq!(report.cases.len(), 40);
        assert_eq!(report.completeness, 1.0);
        assert!(report.r_squared.unwrap() >= 0.999);
        assert!(report.mae.unwrap() <= 0.002);
        for c in &report.cases {
            assert!((c.predicted.unwrap() - c.benchmark).abs() <= 0.0005 + 1e-12, "{}", c.case_id);
        }
    }

    #[test]
    fn repetitions_are_counted_per_case() {
        let counting = Arc::new(CountingBackend::new(Arc::new(EvidenceFollowing)));
        let a = agent(counting.clone());
        let mut targets = published_targets();
        targets.truncate(2);
        let report = run_marginal_eval(&a, &targets, &EvalOptions::with_reps(20)).unwrap();
        assert_eq!(report.cases.len(), 8);
        assert_eq!(counting.calls(), 20 * 8);
        assert!(report.cases.iter().all(|c| c.samples.len() == 20));
    }

    #[test]
    fn constant_baseline_reproduces_the_flat_signature() {
        let cases = marginal_cases(&FeatureSchema::survey(), &published_targets()).unwrap();
        let llm = ConstantBackend::new(0.8).unwrap();
        let report = run_roleplay_baseline(&cases, &llm, &EvalOptions::with_reps(3)).unwrap();
        assert!(report.cases.iter().all(|c| (c.predicted.unwrap() - 0.8).abs() < 1e-12));
        let oracle: f64 = cases.iter().map(|c| (0.8 - c.benchmark_probability).abs()).sum::<f64>() / 40.0;
        assert!((report.mae.unwrap() - oracle).abs() < 1e-12);
        assert!(report.r_squared.unwrap() < -30.0);
    }

    #[test]
    fn single_rep_baseline_equals_raw_parse() {
        let cases = marginal_cases(&FeatureSchema::survey(), &published_targets()).unwrap();
        let report = run_roleplay_baseline(&cases[..3], &ConstantBackend::new(0.314).unwrap(), &EvalOptions::default()).unwrap();
        for c in &report.cases {
            assert_eq!(c.samples.len(), 1);
            assert_eq!(c.predicted, Some(c.samples[0]));
        }
    }

    #[test]
    fn unparseable_replies_mark_cases_incomplete() {
        let cases = marginal_cases(&FeatureSchema::survey(), &published_targets()).unwrap();
        let script = MockScript::from_toml_str(
            "default_response = \"Final probability: 30.0%\"\n[[rules]]\ncontains = \"I am a woman\"\nresponse = \"I cannot say.\"\n",
        )
        .unwrap();
        let llm = MockBackend::new(script).unwrap();
        let report = run_roleplay_baseline(&cases, &llm, &EvalOptions::with_reps(2)).unwrap();
        let bad: Vec<&str> = report.incomplete().map(|c| c.case_id.as_str()).collect();
        assert_eq!(bad, ["gender/female"]);
        assert!((report.completeness - 39.0 / 40.0).abs() < 1e-15);
        assert!(report.r_squared.is_some());
    }

    #[test]
    fn bivariate_averaging_metrics_match_recomputation() {
        let targets = published_targets();
        let edu = targets.iter().find(|t| t.variable == "education").unwrap();
        let gen = targets.iter().find(|t| t.variable == "gender").unwrap();
        let mut entries = Vec::new();
        for (i, e) in edu.entries.iter().enumerate() {
            for (j, g) in gen.entries.iter().enumerate() {
                entries.push(crate::synth::BivariateEntry {
                    level_a: e.level.clone(),
                    level_b: g.level.clone(),
                    probability: Some(0.15 + 0.03 * i as f64 + 0.02 * j as f64),
                    support: Some(1),
                    purchases: Some(0),
                });
            }
        }
        let table = BivariateTable { variable_a: "education".into(), variable_b: "gender".into(), entries };
        let pairs = [("education".to_string(), "gender".to_string())];
        let report = run_bivariate_eval(&agent(Arc::new(EvidenceAveraging)), &[table], &pairs, &EvalOptions::default()).unwrap();
        assert_eq!(report.cases.len(), 8);
        for c in &report.cases {
            let pe = edu.probability(&c.levels[0].1).unwrap();
            let pg = gen.probability(&c.levels[1].1).unwrap();
            let expected = format!("{:.1}", (pe + pg) / 2.0 * 100.0).parse::<f64>().unwrap() / 100.0;
            assert!((c.predicted.unwrap() - expected).abs() < 1e-12, "{}", c.case_id);
        }
        let p: Vec<f64> = report.cases.iter().map(|c| c.predicted.unwrap()).collect();
        let t: Vec<f64> = report.cases.iter().map(|c| c.benchmark).collect();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let ss_res: f64 = p.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot: f64 = t.iter().map(|b| (b - mean).powi(2)).sum();
        assert!((report.r_squared.unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }
}
