//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};

use insuragent_core::agent::{parse_events, Agent, AgentConfig, EpisodicMemory, PromptTemplate, UserProfile};
use insuragent_core::artifact::ArtifactHeader;
use insuragent_core::eval::{
    marginal_cases, ranking_case, run_bivariate_eval, run_discriminative, run_marginal_eval, run_roleplay_baseline,
    run_scenarios, write_eval_csv, write_ranking_csv, write_scenario_csv, write_summary_json, write_trajectory_csv,
    EvalOptions, EvalReport, EvalSummary, ScenarioSuite,
};
use insuragent_core::fixtures;
use insuragent_core::llm::{backend_from_selector, Backend, BackendSelector, GatewayError, RemoteBackend};
use insuragent_core::schema::FeatureSchema;
use insuragent_core::store::{
    build_index, corpus_from_tables, load_corpus, survey_corpus, Embedder, FactorDocument, FactorIndex,
    HashEmbedder, RemoteEmbedder,
};
use insuragent_core::synth::{
    fit_coefficients, implied_rate, published_targets, read_tables_csv, run_benchmark, targets_by_level,
    write_tables_csv, BenchmarkConfig, BivariateTable, FitOptions, FitReport, LogitModel, PopulationDistribution,
    ProbabilityTable, SynthError,
};

use crate::config::{is_uniform_keyword, RunConfig};
use crate::{
    AgentInputs, BivariateArgs, Cli, CliError, Command, DecideArgs, EvalArgs, FitArgs, IndexArgs, ModelInputs,
    RankArgs, ScenarioArgs, SynthArgs, TrajectoryArgs,
};

type Result<T> = std::result::Result<T, CliError>;

const DEFAULT_BACKEND: &str = "mock:evidence";

pub fn dispatch(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        config.paths.out_dir = Some(out);
    }
    if let Some(b) = cli.backend {
        config.llm.backend = Some(b);
    }
    if let Some(c) = cli.concurrency {
        config.llm.concurrency = c;
    }
    if let Some(t) = cli.temperature {
        config.llm.temperature = t;
    }
    if config.llm.concurrency == 0 {
        return Err(CliError::Usage("concurrency must be at least 1".into()));
    }
    if !(config.llm.temperature >= 0.0) {
        return Err(CliError::Usage("temperature must be non-negative".into()));
    }
    match cli.command {
        Command::Synth(a) => synth(config, a),
        Command::Fit(a) => fit(config, a),
        Command::Index(a) => index(config, a),
        Command::Decide(a) => decide(config, a),
        Command::EvalMarginal(a) => eval_marginal(config, a),
        Command::EvalBivariate(a) => eval_bivariate(config, a),
        Command::EvalBaseline(a) => eval_baseline(config, a),
        Command::Rank(a) => rank(config, a),
        Command::Scenario(a) => scenario(config, a),
        Command::Trajectory(a) => trajectory(config, a),
        Command::Report => report(config),
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn apply_model_inputs(config: &mut RunConfig, inputs: ModelInputs) {
    set(&mut config.paths.schema, inputs.schema);
    set(&mut config.paths.distribution, inputs.distribution);
    set(&mut config.paths.targets, inputs.targets);
    set(&mut config.synth.target_rate, inputs.target_rate);
}

fn apply_agent_inputs(config: &mut RunConfig, inputs: AgentInputs) {
    set(&mut config.paths.index, inputs.index);
    set(&mut config.paths.template, inputs.template);
    if let Some(s) = inputs.samples_per_decision {
        config.eval.samples_per_decision = s;
    }
}

struct Ctx {
    config: RunConfig,
    out: PathBuf,
    hash: String,
    schema: FeatureSchema,
}

impl Ctx {
    fn new(config: RunConfig) -> Result<Self> {
        config.check_inputs()?;
        let schema = match &config.paths.schema {
            Some(p) => FeatureSchema::load(p)?,
            None => FeatureSchema::survey(),
        };
        let out = config.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let hash = config.hash();
        Ok(Ctx { config, out, hash, schema })
    }

    fn header(&self, artifact: &str, backend: Option<&str>) -> ArtifactHeader {
        ArtifactHeader::new(artifact)
            .with("config_hash", &self.hash)
            .with("seed", self.config.synth.seed)
            .with("backend", backend.unwrap_or("none"))
    }

    fn create(&self, name: &str) -> Result<(BufWriter<File>, PathBuf)> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok((BufWriter::new(file), path))
    }

    fn write_text(&self, name: &str, header: &ArtifactHeader, body: &str) -> Result<PathBuf> {
        let (mut w, path) = self.create(name)?;
        w.write_all(header.render().as_bytes())?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(path)
    }

    fn read_tables(path: &Path) -> Result<(Vec<ProbabilityTable>, Vec<BivariateTable>)> {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(read_tables_csv(file)?)
    }

    fn targets(&self) -> Result<Vec<ProbabilityTable>> {
        match &self.config.paths.targets {
            Some(p) => Ok(Self::read_tables(p)?.0),
            None => Ok(published_targets()),
        }
    }

    fn benchmark_marginals(&self) -> Result<Vec<ProbabilityTable>> {
        match &self.config.paths.benchmark {
            Some(p) => {
                let tables = Self::read_tables(p)?.0;
                if tables.is_empty() {
                    return Err(CliError::Usage(format!("{} holds no marginal tables", p.display())));
                }
                Ok(tables)
            }
            None => Ok(published_targets()),
        }
    }

    fn distribution(&self, targets: &[ProbabilityTable]) -> Result<PopulationDistribution> {
        Ok(match &self.config.paths.distribution {
            Some(p) if is_uniform_keyword(p) => PopulationDistribution::uniform(&self.schema),
            Some(p) => PopulationDistribution::load(&self.schema, p)?,
            None => PopulationDistribution::consistent_with_targets(
                &self.schema,
                &targets_by_level(&self.schema, targets)?,
            )?,
        })
    }

    fn target_rate(&self, dist: &PopulationDistribution, targets: &[ProbabilityTable]) -> Result<f64> {
        let rate = match (self.config.synth.target_rate, dist.target_rate) {
            (Some(r), _) | (None, Some(r)) => r,
            (None, None) => implied_rate(&targets_by_level(&self.schema, targets)?, dist),
        };
        if !(rate > 0.0 && rate < 1.0) {
            return Err(CliError::Usage(format!("target rate {rate} must lie strictly between 0 and 1")));
        }
        Ok(rate)
    }

    fn selector(&self, default: &str) -> Result<String> {
        let s = self.config.llm.backend.clone().unwrap_or_else(|| default.to_string());
        s.parse::<BackendSelector>().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(s)
    }

    fn backend(&self, default: &str) -> Result<Arc<dyn Backend>> {
        let selector = self.selector(default)?;
        backend_from_selector(&selector, &self.config.llm.remote(), self.config.paths.fixtures.as_deref()).map_err(|e| match e {
            GatewayError::Config(_) | GatewayError::Script(_) => CliError::Usage(e.to_string()),
            e => e.into(),
        })
    }

    fn embedder(&self) -> Result<Arc<dyn Embedder>> {
        match self.config.llm.embedder.as_str() {
            "hash" => Ok(Arc::new(HashEmbedder)),
            "remote" => Ok(Arc::new(RemoteEmbedder::new(RemoteBackend::from_env(self.config.llm.remote())?))),
            other => Err(CliError::Usage(format!("unknown embedder `{other}`; expected `hash` or `remote`"))),
        }
    }

    fn corpus(&self) -> Result<Vec<FactorDocument>> {
        Ok(match &self.config.paths.corpus {
            Some(p) => load_corpus(&self.schema, p)?,
            None => survey_corpus(),
        })
    }

    fn index(&self, embedder: &dyn Embedder) -> Result<Arc<FactorIndex>> {
        Ok(Arc::new(match &self.config.paths.index {
            Some(p) => FactorIndex::load(p)?,
            None => build_index(self.corpus()?, embedder)?,
        }))
    }

    fn agent(&self, llm: Arc<dyn Backend>) -> Result<Agent> {
        let embedder = self.embedder()?;
        let index = self.index(embedder.as_ref())?;
        let template = match &self.config.paths.template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::bundled(),
        };
        let agent_config = AgentConfig {
            samples_per_decision: self.config.eval.samples_per_decision,
            temperature: self.config.llm.temperature,
            max_tokens: self.config.llm.max_tokens,
            model_id: self.config.llm.model.clone(),
            ..AgentConfig::default()
        };
        Agent::new(self.schema.clone(), index, embedder, llm)?
            .with_template(template)
            .with_config(agent_config)
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    fn eval_options(&self, reps: usize) -> EvalOptions {
        EvalOptions { reps, concurrency: self.config.llm.concurrency, temperature: self.config.llm.temperature }
    }

    fn fit(&self, targets: &[ProbabilityTable], dist: &PopulationDistribution, rate: f64, options: &FitOptions) -> Result<LogitModel> {
        match fit_coefficients(&self.schema, targets, dist, rate, options) {
            Ok(outcome) => {
                self.write_residuals(&outcome.report)?;
                Ok(outcome.model)
            }
            Err(SynthError::Fit(report)) => {
                self.write_residuals(&report)?;
                Err(anyhow!(
                    "fit did not converge: max residual {:.3e} after {} sweeps",
                    report.max_abs_error,
                    report.sweeps
                )
                .into())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn write_residuals(&self, report: &FitReport) -> Result<PathBuf> {
        let header = self
            .header("fit_residuals", None)
            .with("sweeps", report.sweeps)
            .with("converged", report.converged)
            .with("max_abs_error", format!("{:.3e}", report.max_abs_error))
            .with("target_rate", format!("{:.6}", report.target_rate));
        let (mut w, path) = self.create("fit_residuals.csv")?;
        w.write_all(header.render().as_bytes())?;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["variable", "level", "target", "achieved", "error"])?;
        for r in &report.residuals {
            csv.write_record([
                r.variable.clone(),
                r.level.clone(),
                format!("{:.6}", r.target),
                r.achieved.map_or("NA".into(), |a| format!("{a:.6}")),
                format!("{:.3e}", r.error()),
            ])?;
        }
        csv.flush()?;
        Ok(path)
    }

    fn save_report(&self, stem: &str, header: &ArtifactHeader, report: &EvalReport) -> Result<()> {
        let (mut w, _) = self.create(&format!("{stem}.csv"))?;
        write_eval_csv(&mut w, Some(header), report)?;
        w.flush()?;
        let (mut w, _) = self.create(&format!("{stem}.summary.json"))?;
        write_summary_json(&mut w, Some(header), report)?;
        w.flush()?;
        println!(
            "{}: {} cases, completeness {:.3}, R² {}, MAE {}",
            report.task,
            report.cases.len(),
            report.completeness,
            report.r_squared.map_or("undefined".into(), |r| format!("{r:.4}")),
            report.mae.map_or("undefined".into(), |m| format!("{m:.4}")),
        );
        Ok(())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failure(e.into())
    }
}

fn fit(mut config: RunConfig, args: FitArgs) -> Result<()> {
    apply_model_inputs(&mut config, args.inputs);
    let ctx = Ctx::new(config)?;
    let targets = ctx.targets()?;
    let dist = ctx.distribution(&targets)?;
    let rate = ctx.target_rate(&dist, &targets)?;
    let options = FitOptions { tolerance: args.tolerance, max_sweeps: args.max_sweeps, ..FitOptions::default() };
    let model = ctx.fit(&targets, &dist, rate, &options)?;
    let header = ctx.header("model", None).with("target_rate", format!("{rate:.6}"));
    let path = ctx.write_text("model.json", &header, &(model.to_json_string(&ctx.schema) + "\n"))?;
    println!("fitted model written to {}", path.display());
    Ok(())
}

fn synth(mut config: RunConfig, args: SynthArgs) -> Result<()> {
    apply_model_inputs(&mut config, args.inputs);
    set(&mut config.paths.model, args.model);
    if let Some(n) = args.n {
        config.synth.n = n;
    }
    if let Some(s) = args.seed {
        config.synth.seed = s;
    }
    if !args.pairs.is_empty() {
        config.eval.pairs = args.pairs;
    }
    if config.synth.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let pairs = config.pairs()?;
    let ctx = Ctx::new(config)?;
    let targets = ctx.targets()?;
    let dist = ctx.distribution(&targets)?;
    let rate = ctx.target_rate(&dist, &targets)?;
    let model = match &ctx.config.paths.model {
        Some(p) => LogitModel::load(&ctx.schema, p)?,
        None => ctx.fit(&targets, &dist, rate, &FitOptions::default())?,
    };
    let mut bconfig = BenchmarkConfig::new(ctx.config.synth.n, ctx.config.synth.seed, rate);
    bconfig.pairs = pairs;
    let bench = run_benchmark(&ctx.schema, &dist, &model, &bconfig)?;
    let header = |artifact: &str| {
        ctx.header(artifact, None)
            .with("n", bench.n)
            .with("target_rate", format!("{rate:.6}"))
            .with("calibration_iterations", bench.calibration.iterations)
            .with("simulated_rate", format!("{:.6}", bench.simulated_rate))
    };
    let (mut w, _) = ctx.create("marginals.csv")?;
    write_tables_csv(&mut w, Some(&header("marginals")), &bench.marginals, &[])?;
    w.flush()?;
    let (mut w, _) = ctx.create("bivariates.csv")?;
    write_tables_csv(&mut w, Some(&header("bivariates")), &[], &bench.bivariates)?;
    w.flush()?;
    let mut worst = 0.0f64;
    for t in &bench.marginals {
        let Some(target) = targets.iter().find(|x| x.variable == t.variable) else { continue };
        for e in &t.entries {
            if let (Some(p), Some(q)) = (e.probability, target.probability(&e.level)) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    println!(
        "n = {}, seed = {}, simulated rate {:.6} (target {rate:.6}), calibration iterations {}, max |marginal - target| {worst:.4}",
        bench.n, ctx.config.synth.seed, bench.simulated_rate, bench.calibration.iterations
    );
    Ok(())
}

fn index(mut config: RunConfig, args: IndexArgs) -> Result<()> {
    set(&mut config.paths.corpus, args.corpus);
    if let Some(e) = args.embedder {
        config.llm.embedder = e;
    }
    if let Some(t) = &args.tables {
        if !t.exists() {
            return Err(CliError::Usage(format!("{} does not exist", t.display())));
        }
    }
    let ctx = Ctx::new(config)?;
    let corpus = match &args.tables {
        Some(t) => corpus_from_tables(&ctx.schema, &Ctx::read_tables(t)?.0)?,
        None => ctx.corpus()?,
    };
    let embedder = ctx.embedder()?;
    let index = build_index(corpus.clone(), embedder.as_ref())?;
    let header = ctx.header("corpus", None);
    ctx.write_text("corpus.json", &header, &(serde_json::to_string_pretty(&corpus)? + "\n"))?;
    let header = ctx.header("index", None).with("embedder", index.embedder_id());
    let path = ctx.write_text("index.json", &header, &(serde_json::to_string_pretty(&index)? + "\n"))?;
    println!("{} documents indexed with `{}` into {}", index.len(), index.embedder_id(), path.display());
    Ok(())
}

fn decide(mut config: RunConfig, args: DecideArgs) -> Result<()> {
    apply_agent_inputs(&mut config, args.agent);
    let ctx = Ctx::new(config)?;
    let (id, text) = match (&args.profile, args.text) {
        (Some(p), _) => (
            p.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned()),
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        ),
        (None, Some(t)) => ("inline".to_string(), t),
        (None, None) => return Err(CliError::Usage("either --profile or --text is required".into())),
    };
    let llm = ctx.backend(DEFAULT_BACKEND)?;
    let agent = ctx.agent(llm.clone())?;
    let decision = agent.decide(&UserProfile::new(&id, text), &EpisodicMemory::new(&id), None)?;
    let header = ctx.header("decision", Some(&llm.id()));
    ctx.write_text("decision.json", &header, &(serde_json::to_string_pretty(&decision)? + "\n"))?;
    println!("{}", decision.rationale);
    println!("Final probability: {:.1}%", decision.probability * 100.0);
    Ok(())
}

fn eval_marginal(mut config: RunConfig, args: EvalArgs) -> Result<()> {
    apply_agent_inputs(&mut config, args.agent);
    set(&mut config.paths.benchmark, args.benchmark);
    set(&mut config.eval.reps, args.reps);
    let ctx = Ctx::new(config)?;
    let reps = ctx.config.eval.reps.unwrap_or(1);
    let llm = ctx.backend(DEFAULT_BACKEND)?;
    let agent = ctx.agent(llm.clone())?;
    let report = run_marginal_eval(&agent, &ctx.benchmark_marginals()?, &ctx.eval_options(reps))
        .map_err(reps_usage)?;
    let header = ctx.header("eval_marginal", Some(&llm.id())).with("reps", reps);
    ctx.save_report("eval_marginal", &header, &report)
}

fn eval_bivariate(mut config: RunConfig, args: BivariateArgs) -> Result<()> {
    apply_agent_inputs(&mut config, args.agent);
    set(&mut config.paths.benchmark, args.benchmark);
    set(&mut config.eval.reps, args.reps);
    if !args.pairs.is_empty() {
        config.eval.pairs = args.pairs;
    }
    let pairs = config.pairs()?;
    let ctx = Ctx::new(config)?;
    let path = ctx
        .config
        .paths
        .benchmark
        .clone()
        .ok_or_else(|| CliError::Usage("eval-bivariate needs --benchmark <bivariates.csv> from `synth`".into()))?;
    let tables = Ctx::read_tables(&path)?.1;
    let reps = ctx.config.eval.reps.unwrap_or(1);
    let llm = ctx.backend(DEFAULT_BACKEND)?;
    let agent = ctx.agent(llm.clone())?;
    let report = run_bivariate_eval(&agent, &tables, &pairs, &ctx.eval_options(reps)).map_err(reps_usage)?;
    let header = ctx.header("eval_bivariate", Some(&llm.id())).with("reps", reps);
    ctx.save_report("eval_bivariate", &header, &report)
}

fn eval_baseline(mut config: RunConfig, args: EvalArgs) -> Result<()> {
    set(&mut config.paths.benchmark, args.benchmark);
    set(&mut config.eval.reps, args.reps);
    let ctx = Ctx::new(config)?;
    let reps = ctx.config.eval.reps.unwrap_or(20);
    let llm = ctx.backend(DEFAULT_BACKEND)?;
    let cases = marginal_cases(&ctx.schema, &ctx.benchmark_marginals()?)?;
    let report = run_roleplay_baseline(&cases, llm.as_ref(), &ctx.eval_options(reps)).map_err(reps_usage)?;
    let header = ctx.header("eval_baseline", Some(&llm.id())).with("reps", reps);
    ctx.save_report("eval_baseline", &header, &report)
}

fn reps_usage(e: insuragent_core::eval::EvalError) -> CliError {
    match e {
        insuragent_core::eval::EvalError::Input(m) => CliError::Usage(m),
        other => other.into(),
    }
}

fn rank(mut config: RunConfig, args: RankArgs) -> Result<()> {
    set(&mut config.paths.benchmark, args.benchmark);
    if config.llm.backend.is_none() {
        return Err(CliError::Usage("rank needs --backend (a script that answers with a `Ranking:` line, or remote)".into()));
    }
    let ctx = Ctx::new(config)?;
    let llm = ctx.backend(DEFAULT_BACKEND)?;
    let benchmark = ctx.benchmark_marginals()?;
    let factors = if args.factors.is_empty() {
        ctx.schema.variables.iter().map(|v| v.name.clone()).collect()
    } else {
        args.factors
    };
    let mut results = Vec::new();
    for f in &factors {
        let case = ranking_case(&ctx.schema, &benchmark, f).map_err(reps_usage)?;
        let r = run_discriminative(&case, llm.as_ref())?;
        println!(
            "{f}: expected {} predicted {} tau {:.3}",
            r.expected_order.join(">"),
            r.predicted_order.join(">"),
            r.tau
        );
        results.push(r);
    }
    let (mut w, _) = ctx.create("ranking.csv")?;
    write_ranking_csv(&mut w, Some(&ctx.header("ranking", Some(&llm.id()))), &results)?;
    w.flush()?;
    Ok(())
}

fn load_suite(name: &str, fixtures_dir: Option<&Path>) -> Result<ScenarioSuite> {
    if fixtures::suite(name).is_some() {
        return Ok(ScenarioSuite::bundled(name)?);
    }
    let in_dir = fixtures_dir.map(|d| d.join("suites").join(format!("{name}.toml")));
    let path = match in_dir {
        Some(p) if p.exists() => p,
        _ => PathBuf::from(name),
    };
    if !path.exists() {
        return Err(CliError::Usage(format!("no scenario suite `{name}`")));
    }
    Ok(ScenarioSuite::load(&path)?)
}

fn scenario(mut config: RunConfig, args: ScenarioArgs) -> Result<()> {
    apply_agent_inputs(&mut config, args.agent);
    let ctx = Ctx::new(config)?;
    let names: Vec<String> = if args.suites.is_empty() {
        fixtures::SUITES.iter().map(|(n, _)| n.to_string()).collect()
    } else {
        args.suites
    };
    let mut reports = Vec::new();
    let mut backends = Vec::new();
    for name in &names {
        let suite = load_suite(name, ctx.config.paths.fixtures.as_deref())?;
        let default = suite.mock.as_ref().map_or(DEFAULT_BACKEND.to_string(), |m| format!("mock:{m}"));
        let llm = ctx.backend(&default)?;
        let report = run_scenarios(&suite, &ctx.agent(llm.clone())?)?;
        let series: Vec<String> = report
            .results
            .iter()
            .map(|r| format!("{}={}", r.id, r.predicted.map_or("NA".into(), |p| format!("{:.1}%", p * 100.0))))
            .collect();
        println!(
            "{}: {} [{}]",
            report.scenario_id,
            if report.ordering_satisfied { "ordering satisfied" } else { "ordering VIOLATED" },
            series.join(", ")
        );
        for (hi, lo) in &report.violations {
            println!("  expected {hi} above {lo}");
        }
        backends.push(llm.id());
        reports.push(report);
    }
    backends.dedup();
    let (mut w, _) = ctx.create("scenarios.csv")?;
    write_scenario_csv(&mut w, Some(&ctx.header("scenarios", Some(&backends.join(" ")))), &reports)?;
    w.flush()?;
    Ok(())
}

fn trajectory(mut config: RunConfig, args: TrajectoryArgs) -> Result<()> {
    apply_agent_inputs(&mut config, args.agent);
    for p in [&args.profile, &args.events].into_iter().flatten() {
        if !p.exists() {
            return Err(CliError::Usage(format!("{} does not exist", p.display())));
        }
    }
    let ctx = Ctx::new(config)?;
    let (profile_id, profile_text) = match &args.profile {
        Some(p) => (
            p.file_stem().map_or("profile".into(), |s| s.to_string_lossy().into_owned()),
            std::fs::read_to_string(p)?,
        ),
        None => ("roller_coaster".to_string(), fixtures::ROLLER_COASTER_PROFILE.to_string()),
    };
    let events_text = match &args.events {
        Some(p) => std::fs::read_to_string(p)?,
        None => fixtures::ROLLER_COASTER_EVENTS.to_string(),
    };
    let events = parse_events(&events_text).map_err(|e| CliError::Usage(e.to_string()))?;
    let default = if args.events.is_none() { "mock:roller_coaster" } else { DEFAULT_BACKEND };
    let llm = ctx.backend(default)?;
    let agent = ctx.agent(llm.clone())?;
    let mut memory = EpisodicMemory::new(&profile_id);
    let decisions = agent.run_trajectory(&UserProfile::new(&profile_id, profile_text), &events, &mut memory)?;
    let header = ctx.header("trajectory", Some(&llm.id()));
    let (mut w, _) = ctx.create("trajectory.csv")?;
    write_trajectory_csv(&mut w, Some(&header), &events, &decisions)?;
    w.flush()?;
    let mut body = Vec::new();
    memory.write_jsonl(&mut body)?;
    ctx.write_text("memory.jsonl", &ctx.header("memory", Some(&llm.id())), &String::from_utf8(body).expect("utf-8"))?;
    let series: Vec<String> = decisions.iter().map(|d| format!("{:.1}%", d.probability * 100.0)).collect();
    println!("{}", series.join(" -> "));
    Ok(())
}

fn report(config: RunConfig) -> Result<()> {
    let ctx = Ctx::new(config)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&ctx.out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".summary.json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no *.summary.json files in {}", ctx.out.display())));
    }
    let (w, _) = ctx.create("report.csv")?;
    let mut w = BufWriter::new(w);
    w.write_all(ctx.header("report", None).render().as_bytes())?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["task", "backend", "reps", "cases", "completeness", "r_squared", "mae"])?;
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
    for p in &paths {
        let s: EvalSummary = serde_json::from_str(&std::fs::read_to_string(p)?)
            .with_context(|| format!("reading {}", p.display()))?;
        println!(
            "{:<10} {:<24} reps {:>3}  cases {:>3}  completeness {:.3}  R² {:>10}  MAE {:>8}",
            s.task,
            s.backend_id,
            s.reps,
            s.cases,
            s.completeness,
            fmt(s.r_squared),
            fmt(s.mae)
        );
        csv.write_record([
            s.task.clone(),
            s.backend_id.clone(),
            s.reps.to_string(),
            s.cases.to_string(),
            format!("{:.6}", s.completeness),
            fmt(s.r_squared),
            fmt(s.mae),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
