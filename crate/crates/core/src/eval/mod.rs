//! Evaluation protocol: metrics, marginal and bivariate agent evaluation,
//! role-play baselines, discriminative ranking, scenario suites, trajectories.

mod cases;
mod harness;
mod metrics;
mod ranking;
mod report;
mod scenario;

pub use cases::{bivariate_cases, factor_sentence, marginal_cases, CaseKind, EvalCase, EVAL_CITY_SENTENCE};
pub use harness::{
    run_bivariate_eval, run_cases, run_marginal_eval, run_roleplay_baseline, CaseOutcome, EvalOptions, EvalReport,
    ROLEPLAY_INSTRUCTIONS,
};
pub use metrics::{kendall_tau, mean_absolute_error, r_squared};
pub use ranking::{parse_ranking, ranking_case, run_discriminative, RankingCase, RankingResult};
pub use report::{
    write_eval_csv, write_ranking_csv, write_scenario_csv, write_summary_json, write_trajectory_csv, EvalSummary,
};
pub use scenario::{run_scenarios, ScenarioProfile, ScenarioReport, ScenarioResult, ScenarioSuite};

use thiserror::Error;

use crate::agent::AgentError;
use crate::llm::GatewayError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("metric undefined: {0}")]
    Metric(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("task error: {0}")]
    Task(String),
    #[error("suite error: {0}")]
    Suite(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
