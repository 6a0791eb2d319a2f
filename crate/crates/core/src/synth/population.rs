//! Synthetic population: one categorical level per variable per individual.

use rayon::prelude::*;

use super::distribution::PopulationDistribution;
use super::rng::{unit, Stream, StreamKey, MAX_DRAWS_PER_INDIVIDUAL};
use super::{Result, SynthError};
use crate::schema::FeatureSchema;

/// Level index per schema variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Individual(pub Vec<u8>);

impl std::ops::Deref for Individual {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

/// Row-major level matrix, `n × n_vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    n_vars: usize,
    levels: Vec<u8>,
    pub seed: u64,
}

impl Population {
    /// Builds a population from explicit individuals (tests, hand fixtures).
    pub fn from_individuals(
        schema: &FeatureSchema,
        individuals: &[Individual],
        seed: u64,
    ) -> Result<Self> {
        let n_vars = schema.len();
        let mut levels = Vec::with_capacity(individuals.len() * n_vars);
        for (i, ind) in individuals.iter().enumerate() {
            if ind.len() != n_vars {
                return Err(SynthError::Input(format!(
                    "individual {i} has {} attributes, schema has {n_vars}",
                    ind.len()
                )));
            }
            for (var, &l) in schema.variables.iter().zip(ind.iter()) {
                if l as usize >= var.n_levels() {
                    return Err(SynthError::Input(format!(
                        "individual {i}: level index {l} out of range for `{}`",
                        var.name
                    )));
                }
            }
            levels.extend_from_slice(ind);
        }
        Ok(Population {
            n_vars,
            levels,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        if self.n_vars == 0 {
            0
        } else {
            self.levels.len() / self.n_vars
        }
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn individual(&self, i: usize) -> &[u8] {
        &self.levels[i * self.n_vars..(i + 1) * self.n_vars]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.levels.chunks_exact(self.n_vars)
    }

    pub(crate) fn rows(&self) -> &[u8] {
        &self.levels
    }
}

/// Samples `n` individuals, each attribute drawn independently from `dist`.
/// Individual `i` reads only its own window of the `(seed, attributes)` stream.
pub fn sample_population(
    schema: &FeatureSchema,
    dist: &PopulationDistribution,
    n: usize,
    seed: u64,
) -> Result<Population> {
    if n == 0 {
        return Err(SynthError::Input("population size must be at least 1".into()));
    }
    dist.validate(schema)?;
    let n_vars = schema.len();
    if n_vars > MAX_DRAWS_PER_INDIVIDUAL {
        return Err(SynthError::Input(format!(
            "at most {MAX_DRAWS_PER_INDIVIDUAL} variables are supported"
        )));
    }
    let cumulative = dist.cumulative();
    let key = StreamKey::new(seed, Stream::Attributes);
    let mut levels = vec![0u8; n * n_vars];
    levels
        .par_chunks_mut(n_vars)
        .enumerate()
        .for_each(|(i, row)| {
            let mut rng = key.at(i as u64);
            for (slot, cum) in row.iter_mut().zip(&cumulative) {
                let u = unit(&mut rng);
                let li = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                *slot = li as u8;
            }
        });
    Ok(Population {
        n_vars,
        levels,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Level, SignificanceTier, Variable};

    fn binary_schema() -> FeatureSchema {
        FeatureSchema::new(vec![Variable {
            name: "flag".into(),
            display: "Flag".into(),
            tier: SignificanceTier::Low,
            levels: vec![
                Level { label: "A".into(), code: Some(1) },
                Level { label: "B".into(), code: Some(0) },
            ],
        }])
        .unwrap()
    }

    #[test]
    fn degenerate_distribution_gives_single_level() {
        let schema = binary_schema();
        let dist = PopulationDistribution::new(&schema, vec![vec![1.0, 0.0]]).unwrap();
        let pop = sample_population(&schema, &dist, 100, 7).unwrap();
        assert_eq!(pop.len(), 100);
        assert!(pop.iter().all(|ind| ind == [0]));
    }

    #[test]
    fn zero_size_is_rejected() {
        let schema = binary_schema();
        let dist = PopulationDistribution::uniform(&schema);
        assert!(matches!(
            sample_population(&schema, &dist, 0, 1),
            Err(SynthError::Input(_))
        ));
    }

    #[test]
    fn mismatched_distribution_is_a_schema_error() {
        let schema = FeatureSchema::survey();
        let other = binary_schema();
        let dist = PopulationDistribution::uniform(&other);
        assert!(matches!(
            sample_population(&schema, &dist, 10, 1),
            Err(SynthError::Distribution(_))
        ));
    }

    #[test]
    fn same_seed_same_population() {
        let schema = FeatureSchema::survey();
        let dist = PopulationDistribution::uniform(&schema);
        let a = sample_population(&schema, &dist, 5000, 3).unwrap();
        let b = sample_population(&schema, &dist, 5000, 3).unwrap();
        let c = sample_population(&schema, &dist, 5000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn prefix_is_stable_under_size_change() {
        let schema = FeatureSchema::survey();
        let dist = PopulationDistribution::uniform(&schema);
        let small = sample_population(&schema, &dist, 100, 3).unwrap();
        let large = sample_population(&schema, &dist, 1000, 3).unwrap();
        for i in 0..100 {
            assert_eq!(small.individual(i), large.individual(i));
        }
    }

    #[test]
    fn uniform_education_frequencies_converge() {
        // Binomial SE at n = 1e6, p = 0.25 is about 0.00043; 0.002 is 4.6 SE.
        let schema = FeatureSchema::survey();
        let dist = PopulationDistribution::uniform(&schema);
        let n = 1_000_000;
        let pop = sample_population(&schema, &dist, n, 1).unwrap();
        let mut counts = [0usize; 4];
        for ind in pop.iter() {
            counts[ind[2] as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() <= 0.002, "frequency {f}");
        }
    }

    #[test]
    fn from_individuals_checks_ranges() {
        let schema = binary_schema();
        assert!(Population::from_individuals(&schema, &[Individual(vec![2])], 0).is_err());
        assert!(Population::from_individuals(&schema, &[Individual(vec![0, 1])], 0).is_err());
        let pop = Population::from_individuals(&schema, &[Individual(vec![1])], 0).unwrap();
        assert_eq!(pop.individual(0), &[1]);
    }
}
