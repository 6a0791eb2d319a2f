//! Benchmark reconstruction: synthetic population sampling, additive logit
//! scoring, intercept calibration, Bernoulli simulation, and aggregation into
//! marginal and bivariate purchase-probability tables.

mod benchmark;
mod calibrate;
mod distribution;
mod fit;
mod logit;
mod population;
mod rng;
mod simulate;
mod tables;

pub use benchmark::{default_pairs, run_benchmark, Benchmark, BenchmarkConfig};
pub use calibrate::{
    bisect_monotone, calibrate_intercept, mean_expected_probability, BisectionResult,
    CalibrationReport, MAX_BISECTION_ITERATIONS,
};
pub use distribution::{PopulationDistribution, VariableWeights};
pub use fit::{
    expected_marginals, fit_coefficients, implied_rate, targets_by_level, ExpectationGrid,
    FitOptions, FitOutcome, FitReport, Residual, MAX_GRID_CELLS,
};
pub use logit::{logit, purchase_probability, sigmoid, LogitModel};
pub use population::{sample_population, Individual, Population};
pub use simulate::{simulate_outcomes, OutcomeVector};
pub use tables::{
    bivariate_table, marginal_table, published_targets, read_tables_csv, write_tables_csv,
    BivariateEntry, BivariateTable, ProbabilityTable, TableEntry,
};

use thiserror::Error;

use crate::schema::SchemaError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("distribution error: {0}")]
    Distribution(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(
        "calibration to rate {target} did not converge after {iterations} iterations \
         (bracket [{lo}, {hi}], achieved {achieved})"
    )]
    Calibration {
        target: f64,
        lo: f64,
        hi: f64,
        iterations: usize,
        achieved: f64,
    },
    #[error("fit did not converge: max residual {:.3e} after {} sweeps", .0.max_abs_error, .0.sweeps)]
    Fit(Box<FitReport>),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Fixed chunk size for parallel reductions. Floating-point sums are reduced
/// chunk by chunk in index order so results do not depend on thread count.
pub(crate) const REDUCE_CHUNK: usize = 8192;
