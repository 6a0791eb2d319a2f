//! End-to-end benchmark run: sample, calibrate, simulate, aggregate.

use super::calibrate::{calibrate_intercept, CalibrationReport};
use super::distribution::PopulationDistribution;
use super::logit::LogitModel;
use super::population::sample_population;
use super::simulate::simulate_outcomes;
use super::tables::{bivariate_table, marginal_table, BivariateTable, ProbabilityTable};
use super::Result;
use crate::schema::FeatureSchema;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub n: usize,
    /// Seeds the attribute, random-effect, and Bernoulli streams.
    pub seed: u64,
    pub target_rate: f64,
    pub calibration_tolerance: f64,
    pub pairs: Vec<(String, String)>,
}

impl BenchmarkConfig {
    pub fn new(n: usize, seed: u64, target_rate: f64) -> Self {
        BenchmarkConfig {
            n,
            seed,
            target_rate,
            calibration_tolerance: 1e-9,
            pairs: default_pairs(),
        }
    }
}

/// (education, gender) and (distance from coast, flood amount).
pub fn default_pairs() -> Vec<(String, String)> {
    vec![
        ("education".into(), "gender".into()),
        ("distance_from_coast".into(), "flood_amount".into()),
    ]
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub model: LogitModel,
    pub calibration: CalibrationReport,
    pub simulated_rate: f64,
    pub purchases: u64,
    pub n: usize,
    pub marginals: Vec<ProbabilityTable>,
    pub bivariates: Vec<BivariateTable>,
}

pub fn run_benchmark(
    schema: &FeatureSchema,
    dist: &PopulationDistribution,
    model: &LogitModel,
    config: &BenchmarkConfig,
) -> Result<Benchmark> {
    model.validate(schema)?;
    let population = sample_population(schema, dist, config.n, config.seed)?;
    let (model, calibration) = calibrate_intercept(
        model,
        &population,
        config.target_rate,
        config.calibration_tolerance,
    )?;
    let outcomes = simulate_outcomes(&model, &population, config.seed)?;
    let marginals = schema
        .variables
        .iter()
        .map(|v| marginal_table(schema, &population, &outcomes, &v.name))
        .collect::<Result<Vec<_>>>()?;
    let bivariates = config
        .pairs
        .iter()
        .map(|(a, b)| bivariate_table(schema, &population, &outcomes, a, b))
        .collect::<Result<Vec<_>>>()?;
    tracing::info!(
        n = config.n,
        rate = outcomes.rate(),
        iterations = calibration.iterations,
        "benchmark simulated"
    );
    Ok(Benchmark {
        model,
        calibration,
        simulated_rate: outcomes.rate(),
        purchases: outcomes.purchase_count(),
        n: population.len(),
        marginals,
        bivariates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_model_yields_target_everywhere() {
        let schema = FeatureSchema::survey();
        let dist = PopulationDistribution::uniform(&schema);
        let model = LogitModel::flat(&schema, 0.0);
        let config = BenchmarkConfig::new(20_000, 9, 0.3);
        let b = run_benchmark(&schema, &dist, &model, &config).unwrap();
        assert!((b.calibration.achieved_rate - 0.3).abs() < 1e-9);
        assert_eq!(b.marginals.len(), 10);
        assert_eq!(b.bivariates.len(), 2);
        assert_eq!(b.bivariates[1].entries.len(), 21);
        for t in &b.marginals {
            assert_eq!(t.total_support(), 20_000);
            assert_eq!(t.total_purchases(), b.purchases);
        }
    }

    #[test]
    fn repeated_runs_are_identical() {
        let schema = FeatureSchema::survey();
        let dist = PopulationDistribution::uniform(&schema);
        let model = LogitModel::flat(&schema, -1.0);
        let config = BenchmarkConfig::new(5_000, 3, 0.25);
        let a = run_benchmark(&schema, &dist, &model, &config).unwrap();
        let b = run_benchmark(&schema, &dist, &model, &config).unwrap();
        assert_eq!(a.marginals, b.marginals);
        assert_eq!(a.bivariates, b.bivariates);
        assert_eq!(a.model, b.model);
    }
}
