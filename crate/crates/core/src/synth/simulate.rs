//! Bernoulli purchase outcomes.

use rayon::prelude::*;

use super::logit::{sigmoid, LogitModel};
use super::population::Population;
use super::rng::{standard_normal, unit, Stream, StreamKey};
use super::{Result, SynthError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeVector {
    pub purchases: Vec<bool>,
    pub seed: u64,
}

impl OutcomeVector {
    pub fn len(&self) -> usize {
        self.purchases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.purchases.is_empty()
    }

    pub fn purchase_count(&self) -> u64 {
        self.purchases.iter().filter(|&&p| p).count() as u64
    }

    pub fn rate(&self) -> f64 {
        self.purchase_count() as f64 / self.len() as f64
    }
}

/// `purchase_i = u_i < p_i` with `u_i ∈ [0, 1)` from individual `i`'s window of
/// the `(seed, bernoulli)` stream. A positive random-intercept sd adds one
/// zero-mean Gaussian deviation per individual from the `(seed, random effect)`
/// stream before scoring.
pub fn simulate_outcomes(model: &LogitModel, population: &Population, seed: u64) -> Result<OutcomeVector> {
    if population.n_vars() != model.coefficients().len() {
        return Err(SynthError::Model(
            "population and model disagree on the number of variables".into(),
        ));
    }
    let bernoulli = StreamKey::new(seed, Stream::Bernoulli);
    let effects = StreamKey::new(seed, Stream::RandomEffect);
    let sd = model.random_intercept_sd;
    let purchases = population
        .rows()
        .par_chunks(population.n_vars())
        .enumerate()
        .map(|(i, row)| {
            let deviation = if sd > 0.0 {
                sd * standard_normal(&mut effects.at(i as u64))
            } else {
                0.0
            };
            let p = sigmoid(model.intercept + model.level_sum(row) + deviation);
            unit(&mut bernoulli.at(i as u64)) < p
        })
        .collect();
    Ok(OutcomeVector { purchases, seed })
}
