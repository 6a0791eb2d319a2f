//! `insuragent`: synthesize the benchmark, build the factor index, run the
//! decision agent, and evaluate it.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Failure classes mapped to exit statuses 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failure(anyhow::Error),
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failure(e.into())
            }
        }
    )*};
}

failure_from!(
    anyhow::Error,
    std::io::Error,
    serde_json::Error,
    insuragent_core::schema::SchemaError,
    insuragent_core::synth::SynthError,
    insuragent_core::store::StoreError,
    insuragent_core::llm::GatewayError,
    insuragent_core::agent::AgentError,
    insuragent_core::eval::EvalError
);

#[derive(Debug, Parser)]
#[command(name = "insuragent", version, about = "Flood-insurance purchase benchmark and decision agent")]
pub struct Cli {
    /// Run configuration file (TOML); flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory for output artifacts [default: out].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// LLM backend: `remote`, `mock:evidence`, `mock:average`, `mock:constant:<p>`, or `mock:<script>`.
    #[arg(long, global = true, value_name = "SELECTOR")]
    pub backend: Option<String>,
    /// Maximum concurrent LLM requests.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Sampling temperature sent to the LLM.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a population and write marginal and bivariate tables.
    Synth(SynthArgs),
    /// Fit logit coefficients to published marginal targets.
    Fit(FitArgs),
    /// Build the factor corpus and its embedding index.
    Index(IndexArgs),
    /// Run the agent on a single profile.
    Decide(DecideArgs),
    /// Evaluate single-factor profiles against marginal tables.
    EvalMarginal(EvalArgs),
    /// Evaluate two-factor profiles against bivariate tables.
    EvalBivariate(BivariateArgs),
    /// Bare role-play baseline without retrieval or reasoning scaffold.
    EvalBaseline(EvalArgs),
    /// Third-person ranking of profiles that differ in one factor.
    Rank(RankArgs),
    /// Run scenario suites and check their expected orderings.
    Scenario(ScenarioArgs),
    /// Run a sequence of timed events through the agent with memory.
    Trajectory(TrajectoryArgs),
    /// Collect evaluation summaries in the output directory into one table.
    Report,
}

#[derive(Debug, Args)]
pub struct ModelInputs {
    /// Feature schema (TOML) [default: bundled survey schema].
    #[arg(long, value_name = "FILE")]
    pub schema: Option<PathBuf>,
    /// Population distribution (TOML), or `uniform` [default: maximum-entropy weights consistent with the targets].
    #[arg(long, value_name = "FILE")]
    pub distribution: Option<PathBuf>,
    /// Marginal target tables (CSV) [default: bundled published marginals].
    #[arg(long, value_name = "FILE")]
    pub targets: Option<PathBuf>,
    /// Overall purchase rate to calibrate to.
    #[arg(long)]
    pub target_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Fitted model (JSON) [default: fit against the targets first].
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Population size.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed for attribute, random-effect and outcome streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bivariate pair `a:b`; repeatable.
    #[arg(long = "pair", value_name = "A:B")]
    pub pairs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub inputs: ModelInputs,
    /// Maximum absolute marginal error to stop at.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Coordinate sweep cap.
    #[arg(long, default_value_t = 200)]
    pub max_sweeps: usize,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus file (JSON) [default: generated from --tables or the published marginals].
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    /// Build the corpus from marginal tables (CSV).
    #[arg(long, value_name = "FILE", conflicts_with = "corpus")]
    pub tables: Option<PathBuf>,
    /// `hash` (offline) or `remote`.
    #[arg(long)]
    pub embedder: Option<String>,
}

#[derive(Debug, Args)]
pub struct AgentInputs {
    /// Factor index (JSON) [default: built in memory from the published marginals].
    #[arg(long, value_name = "FILE")]
    pub index: Option<PathBuf>,
    /// Prompt template (TOML) [default: bundled].
    #[arg(long, value_name = "FILE")]
    pub template: Option<PathBuf>,
    /// Decisions averaged per profile.
    #[arg(long)]
    pub samples_per_decision: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DecideArgs {
    #[command(flatten)]
    pub agent: AgentInputs,
    /// Profile text file.
    #[arg(long, value_name = "FILE", required_unless_present = "text")]
    pub profile: Option<PathBuf>,
    /// Profile text given inline.
    #[arg(long, conflicts_with = "profile")]
    pub text: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub agent: AgentInputs,
    /// Benchmark marginal tables (CSV) [default: bundled published marginals].
    #[arg(long, value_name = "FILE")]
    pub benchmark: Option<PathBuf>,
    /// Repetitions per case [default: 1; 20 for eval-baseline].
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BivariateArgs {
    #[command(flatten)]
    pub agent: AgentInputs,
    /// Bivariate tables written by `synth` (CSV).
    #[arg(long, value_name = "FILE")]
    pub benchmark: Option<PathBuf>,
    /// Repetitions per case.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Pair `a:b`; repeatable.
    #[arg(long = "pair", value_name = "A:B")]
    pub pairs: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Benchmark marginal tables (CSV) [default: bundled published marginals].
    #[arg(long, value_name = "FILE")]
    pub benchmark: Option<PathBuf>,
    /// Factor to rank; repeatable [default: every variable].
    #[arg(long = "factor")]
    pub factors: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[command(flatten)]
    pub agent: AgentInputs,
    /// Bundled suite name or suite file; repeatable [default: all bundled suites].
    #[arg(long = "suite")]
    pub suites: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub agent: AgentInputs,
    /// Profile text file [default: bundled trajectory profile].
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Event file, one `<RFC 3339 timestamp> <text>` per line [default: bundled].
    #[arg(long, value_name = "FILE")]
    pub events: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
