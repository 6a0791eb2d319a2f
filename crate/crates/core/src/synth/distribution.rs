//! Per-variable level weights used to sample the synthetic population.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::schema::FeatureSchema;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelWeight {
    pub label: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableWeights {
    pub name: String,
    pub levels: Vec<LevelWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DistributionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_rate: Option<f64>,
    variables: Vec<VariableWeights>,
}

/// Level probabilities aligned to a [`FeatureSchema`]: `probs[v][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationDistribution {
    probs: Vec<Vec<f64>>,
    /// Overall purchase rate the distribution was derived for, when known.
    pub target_rate: Option<f64>,
}

impl PopulationDistribution {
    pub fn new(schema: &FeatureSchema, probs: Vec<Vec<f64>>) -> Result<Self> {
        let dist = PopulationDistribution {
            probs,
            target_rate: None,
        };
        dist.validate(schema)?;
        Ok(dist)
    }

    pub fn uniform(schema: &FeatureSchema) -> Self {
        let probs = schema
            .variables
            .iter()
            .map(|v| vec![1.0 / v.n_levels() as f64; v.n_levels()])
            .collect();
        PopulationDistribution {
            probs,
            target_rate: None,
        }
    }

    /// Maximum-entropy level weights under which every variable's
    /// weighted mean of `targets[v][l]` equals one shared overall rate.
    ///
    /// Each variable gets the exponential tilt `w_l ∝ exp(λ_v t_l)` closest
    /// to uniform (in KL divergence) that hits the rate; the rate itself is
    /// chosen to minimise the summed divergence over its feasible interval.
    /// Returns the distribution with `target_rate` set.
    pub fn consistent_with_targets(schema: &FeatureSchema, targets: &[Vec<f64>]) -> Result<Self> {
        if targets.len() != schema.len() {
            return Err(SynthError::Distribution(format!(
                "expected targets for {} variables, got {}",
                schema.len(),
                targets.len()
            )));
        }
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        let mut flat_value = None;
        for (var, t) in schema.variables.iter().zip(targets) {
            if t.len() != var.n_levels() {
                return Err(SynthError::Distribution(format!(
                    "variable `{}`: expected {} targets, got {}",
                    var.name,
                    var.n_levels(),
                    t.len()
                )));
            }
            let (min, max) = min_max(t);
            if max - min < 1e-12 {
                flat_value = Some(min);
            }
            lo = lo.max(min);
            hi = hi.min(max);
        }
        let rate = if let Some(v) = flat_value {
            v
        } else {
            if hi - lo <= 1e-9 {
                return Err(SynthError::Distribution(format!(
                    "targets admit no common interior purchase rate (feasible interval [{lo}, {hi}])"
                )));
            }
            let eps = (hi - lo) * 1e-6;
            golden_section(lo + eps, hi - eps, |r| total_divergence(targets, r))
        };
        let mut probs = Vec::with_capacity(targets.len());
        for (var, t) in schema.variables.iter().zip(targets) {
            let (min, max) = min_max(t);
            if max - min < 1e-12 {
                if (min - rate).abs() > 1e-9 {
                    return Err(SynthError::Distribution(format!(
                        "variable `{}` has flat targets {min} incompatible with rate {rate}",
                        var.name
                    )));
                }
                probs.push(vec![1.0 / t.len() as f64; t.len()]);
            } else {
                probs.push(tilt(t, solve_tilt(t, rate)));
            }
        }
        let mut dist = PopulationDistribution::new(schema, probs)?;
        dist.target_rate = Some(rate);
        Ok(dist)
    }

    pub fn probabilities(&self, variable: usize) -> &[f64] {
        &self.probs[variable]
    }

    pub fn all(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.probs.len() != schema.len() {
            return Err(SynthError::Distribution(format!(
                "distribution covers {} variables, schema has {}",
                self.probs.len(),
                schema.len()
            )));
        }
        for (var, p) in schema.variables.iter().zip(&self.probs) {
            if p.len() != var.n_levels() {
                return Err(SynthError::Distribution(format!(
                    "variable `{}`: {} weights for {} levels",
                    var.name,
                    p.len(),
                    var.n_levels()
                )));
            }
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(SynthError::Distribution(format!(
                    "variable `{}` has a negative or non-finite weight",
                    var.name
                )));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(SynthError::Distribution(format!(
                    "variable `{}` weights sum to {sum}",
                    var.name
                )));
            }
        }
        Ok(())
    }

    /// Cumulative weights per variable, last entry pinned to exactly 1.
    pub(crate) fn cumulative(&self) -> Vec<Vec<f64>> {
        self.probs
            .iter()
            .map(|p| {
                let mut acc = 0.0;
                let mut cum: Vec<f64> = p
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect();
                if let Some(last) = cum.last_mut() {
                    *last = 1.0;
                }
                cum
            })
            .collect()
    }

    pub fn from_toml_str(schema: &FeatureSchema, text: &str) -> Result<Self> {
        let file: DistributionFile = toml::from_str(text)?;
        let mut probs = Vec::with_capacity(schema.len());
        for var in &schema.variables {
            let entry = file
                .variables
                .iter()
                .find(|v| v.name == var.name)
                .ok_or_else(|| {
                    SynthError::Distribution(format!("no weights for variable `{}`", var.name))
                })?;
            let mut p = vec![f64::NAN; var.n_levels()];
            for lw in &entry.levels {
                let li = var.level_index(&lw.label).ok_or_else(|| {
                    SynthError::Distribution(format!(
                        "variable `{}` has no level `{}`",
                        var.name, lw.label
                    ))
                })?;
                p[li] = lw.probability;
            }
            if let Some(li) = p.iter().position(|x| x.is_nan()) {
                return Err(SynthError::Distribution(format!(
                    "variable `{}`: level `{}` has no weight",
                    var.name, var.levels[li].label
                )));
            }
            probs.push(p);
        }
        if file.variables.len() != schema.len() {
            return Err(SynthError::Distribution(
                "distribution names variables absent from the schema".into(),
            ));
        }
        let mut dist = PopulationDistribution::new(schema, probs)?;
        dist.target_rate = file.target_rate;
        Ok(dist)
    }

    pub fn load(schema: &FeatureSchema, path: &Path) -> Result<Self> {
        Self::from_toml_str(schema, &std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self, schema: &FeatureSchema) -> String {
        let file = DistributionFile {
            target_rate: self.target_rate,
            variables: schema
                .variables
                .iter()
                .zip(&self.probs)
                .map(|(var, p)| VariableWeights {
                    name: var.name.clone(),
                    levels: var
                        .levels
                        .iter()
                        .zip(p)
                        .map(|(l, &probability)| LevelWeight {
                            label: l.label.clone(),
                            probability,
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("distribution serializes")
    }
}

fn min_max(t: &[f64]) -> (f64, f64) {
    t.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

fn tilt(t: &[f64], lambda: f64) -> Vec<f64> {
    let max = t.iter().map(|x| lambda * x).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = t.iter().map(|x| (lambda * x - max).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn tilted_mean(t: &[f64], lambda: f64) -> f64 {
    tilt(t, lambda).iter().zip(t).map(|(p, x)| p * x).sum()
}

/// Tilt parameter whose weighted mean equals `rate`; the mean is monotone in λ.
fn solve_tilt(t: &[f64], rate: f64) -> f64 {
    let mut lo = -1.0;
    let mut hi = 1.0;
    while tilted_mean(t, lo) > rate && lo > -1e7 {
        lo *= 2.0;
    }
    while tilted_mean(t, hi) < rate && hi < 1e7 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tilted_mean(t, mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn total_divergence(targets: &[Vec<f64>], rate: f64) -> f64 {
    targets
        .iter()
        .map(|t| {
            let (min, max) = min_max(t);
            if max - min < 1e-12 {
                return 0.0;
            }
            let n = t.len() as f64;
            tilt(t, solve_tilt(t, rate))
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| p * (p * n).ln())
                .sum::<f64>()
        })
        .sum()
}

fn golden_section(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::PUBLISHED_MARGINALS;

    fn published_by_level(schema: &FeatureSchema) -> Vec<Vec<f64>> {
        let mut it = PUBLISHED_MARGINALS.iter();
        schema
            .variables
            .iter()
            .map(|v| (0..v.n_levels()).map(|_| it.next().unwrap().probability).collect())
            .collect()
    }

    #[test]
    fn uniform_is_valid() {
        let schema = FeatureSchema::survey();
        let d = PopulationDistribution::uniform(&schema);
        d.validate(&schema).unwrap();
        assert_eq!(d.probabilities(2), &[0.25; 4]);
    }

    #[test]
    fn rejects_bad_sums_and_shapes() {
        let schema = FeatureSchema::survey();
        let mut probs = PopulationDistribution::uniform(&schema).all().to_vec();
        probs[1] = vec![0.6, 0.6];
        assert!(PopulationDistribution::new(&schema, probs.clone()).is_err());
        probs[1] = vec![1.0];
        assert!(PopulationDistribution::new(&schema, probs.clone()).is_err());
        probs[1] = vec![1.5, -0.5];
        assert!(PopulationDistribution::new(&schema, probs).is_err());
    }

    #[test]
    fn consistent_distribution_equalises_weighted_means() {
        let schema = FeatureSchema::survey();
        let targets = published_by_level(&schema);
        let dist = PopulationDistribution::consistent_with_targets(&schema, &targets).unwrap();
        let rate = dist.target_rate.unwrap();
        assert!(rate > 0.242 && rate < 0.255, "rate {rate}");
        for (p, t) in dist.all().iter().zip(&targets) {
            let mean: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
            assert!((mean - rate).abs() < 1e-12, "mean {mean} vs {rate}");
            assert!(p.iter().all(|x| *x > 0.05));
        }
    }

    #[test]
    fn uniform_published_weights_are_inconsistent() {
        // Home ownership and gender imply different overall rates under
        // uniform weights, which is why the default is tilted.
        let home = (0.269 + 0.113) / 2.0;
        let gender = (0.242 + 0.262) / 2.0;
        assert!((gender - home) > 0.05);
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let schema = FeatureSchema::survey();
        let dist =
            PopulationDistribution::consistent_with_targets(&schema, &published_by_level(&schema))
                .unwrap();
        let text = dist.to_toml_string(&schema);
        let again = PopulationDistribution::from_toml_str(&schema, &text).unwrap();
        assert_eq!(dist, again);
    }

    #[test]
    fn missing_level_weight_is_an_error() {
        let schema = FeatureSchema::survey();
        let text = PopulationDistribution::uniform(&schema)
            .to_toml_string(&schema)
            .replacen("label = \"Rent\"", "label = \"Lease\"", 1);
        assert!(PopulationDistribution::from_toml_str(&schema, &text).is_err());
    }
}
