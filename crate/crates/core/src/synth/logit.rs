//! Additive logit scoring model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::schema::FeatureSchema;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Intercept plus one additive log-odds coefficient per (variable, level).
/// The first level of each variable is the reference level and carries 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitModel {
    pub intercept: f64,
    coefficients: Vec<Vec<f64>>,
    pub random_intercept_sd: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    intercept: f64,
    #[serde(default)]
    random_intercept_sd: f64,
    coefficients: Vec<VariableCoefficients>,
}

#[derive(Serialize, Deserialize)]
struct VariableCoefficients {
    variable: String,
    levels: Vec<LevelCoefficient>,
}

#[derive(Serialize, Deserialize)]
struct LevelCoefficient {
    label: String,
    coefficient: f64,
}

impl LogitModel {
    /// All coefficients zero: every individual scores `sigmoid(intercept)`.
    pub fn flat(schema: &FeatureSchema, intercept: f64) -> Self {
        LogitModel {
            intercept,
            coefficients: schema
                .variables
                .iter()
                .map(|v| vec![0.0; v.n_levels()])
                .collect(),
            random_intercept_sd: 0.0,
        }
    }

    pub fn new(
        schema: &FeatureSchema,
        intercept: f64,
        coefficients: Vec<Vec<f64>>,
        random_intercept_sd: f64,
    ) -> Result<Self> {
        let model = LogitModel {
            intercept,
            coefficients,
            random_intercept_sd,
        };
        model.validate(schema)?;
        Ok(model)
    }

    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if !(self.random_intercept_sd >= 0.0 && self.random_intercept_sd.is_finite()) {
            return Err(SynthError::Model(format!(
                "random_intercept_sd must be a non-negative number, got {}",
                self.random_intercept_sd
            )));
        }
        if !self.intercept.is_finite() {
            return Err(SynthError::Model("intercept is not finite".into()));
        }
        if self.coefficients.len() != schema.len() {
            return Err(SynthError::Model(format!(
                "model has coefficients for {} variables, schema has {}",
                self.coefficients.len(),
                schema.len()
            )));
        }
        for (var, c) in schema.variables.iter().zip(&self.coefficients) {
            if c.len() != var.n_levels() {
                return Err(SynthError::Model(format!(
                    "variable `{}`: {} coefficients for {} levels",
                    var.name,
                    c.len(),
                    var.n_levels()
                )));
            }
            if c[0] != 0.0 {
                return Err(SynthError::Model(format!(
                    "variable `{}`: reference level `{}` must have coefficient 0",
                    var.name, var.levels[0].label
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(SynthError::Model(format!(
                    "variable `{}` has a non-finite coefficient",
                    var.name
                )));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, variable: usize, level: usize) -> f64 {
        self.coefficients[variable][level]
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// Sets a non-reference coefficient.
    pub fn set_coefficient(&mut self, variable: usize, level: usize, value: f64) {
        assert!(level > 0, "reference level coefficient is fixed at 0");
        self.coefficients[variable][level] = value;
    }

    pub fn with_intercept(&self, intercept: f64) -> Self {
        LogitModel {
            intercept,
            ..self.clone()
        }
    }

    /// Sum of level coefficients, excluding the intercept. No bounds checks.
    #[inline]
    pub(crate) fn level_sum(&self, levels: &[u8]) -> f64 {
        levels
            .iter()
            .zip(&self.coefficients)
            .map(|(&l, c)| c[l as usize])
            .sum()
    }

    pub fn from_json_str(schema: &FeatureSchema, text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let mut coefficients = Vec::with_capacity(schema.len());
        for var in &schema.variables {
            let entry = file
                .coefficients
                .iter()
                .find(|c| c.variable == var.name)
                .ok_or_else(|| {
                    SynthError::Model(format!("no coefficients for variable `{}`", var.name))
                })?;
            let mut c = vec![f64::NAN; var.n_levels()];
            for lc in &entry.levels {
                let li = var.level_index(&lc.label).ok_or_else(|| {
                    SynthError::Model(format!(
                        "variable `{}` has no level `{}`",
                        var.name, lc.label
                    ))
                })?;
                c[li] = lc.coefficient;
            }
            if let Some(li) = c.iter().position(|x| x.is_nan()) {
                return Err(SynthError::Model(format!(
                    "missing coefficient for `{}` = `{}`",
                    var.name, var.levels[li].label
                )));
            }
            coefficients.push(c);
        }
        LogitModel::new(schema, file.intercept, coefficients, file.random_intercept_sd)
    }

    pub fn load(schema: &FeatureSchema, path: &Path) -> Result<Self> {
        Self::from_json_str(schema, crate::artifact::ArtifactHeader::strip(&std::fs::read_to_string(path)?))
    }

    pub fn to_json_string(&self, schema: &FeatureSchema) -> String {
        let file = ModelFile {
            intercept: self.intercept,
            random_intercept_sd: self.random_intercept_sd,
            coefficients: schema
                .variables
                .iter()
                .zip(&self.coefficients)
                .map(|(var, c)| VariableCoefficients {
                    variable: var.name.clone(),
                    levels: var
                        .levels
                        .iter()
                        .zip(c)
                        .map(|(l, &coefficient)| LevelCoefficient {
                            label: l.label.clone(),
                            coefficient,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }
}

/// `sigmoid(intercept + Σ level coefficients + random_effect)` for one individual.
pub fn purchase_probability(model: &LogitModel, individual: &[u8], random_effect: f64) -> Result<f64> {
    if individual.len() != model.coefficients.len() {
        return Err(SynthError::Model(format!(
            "individual has {} attributes, model expects {}",
            individual.len(),
            model.coefficients.len()
        )));
    }
    let mut eta = model.intercept + random_effect;
    for (vi, (&l, c)) in individual.iter().zip(&model.coefficients).enumerate() {
        let coef = c.get(l as usize).ok_or_else(|| {
            SynthError::Model(format!("no coefficient for level index {l} of variable {vi}"))
        })?;
        eta += coef;
    }
    Ok(sigmoid(eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid((1.0f64 / 3.0).ln()), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(sigmoid((0.34f64 / 0.66).ln()), 0.340, epsilon = 1e-15);
        assert_abs_diff_eq!(logit(sigmoid(1.7)), 1.7, epsilon = 1e-12);
    }

    #[test]
    fn probability_from_model() {
        let schema = FeatureSchema::survey();
        let mut model = LogitModel::flat(&schema, -1.0);
        model.set_coefficient(3, 7, 1.0 + (0.34f64 / 0.66).ln());
        let mut ind = vec![0u8; 10];
        assert_eq!(purchase_probability(&model, &ind, 1.0).unwrap(), 0.5);
        ind[3] = 7;
        assert_abs_diff_eq!(
            purchase_probability(&model, &ind, 0.0).unwrap(),
            0.34,
            epsilon = 1e-15
        );
    }

    #[test]
    fn missing_coefficient_is_a_model_error() {
        let schema = FeatureSchema::survey();
        let model = LogitModel::flat(&schema, 0.0);
        let mut ind = vec![0u8; 10];
        ind[1] = 2; // gender has two levels
        assert!(matches!(
            purchase_probability(&model, &ind, 0.0),
            Err(SynthError::Model(_))
        ));
        assert!(purchase_probability(&model, &ind[..9], 0.0).is_err());

        let text = model.to_json_string(&schema).replacen("\"Rent\"", "\"Lease\"", 1);
        assert!(LogitModel::from_json_str(&schema, &text).is_err());
    }

    #[test]
    fn reference_level_must_be_zero() {
        let schema = FeatureSchema::survey();
        let mut c = LogitModel::flat(&schema, 0.0).coefficients().to_vec();
        c[0][0] = 0.1;
        assert!(LogitModel::new(&schema, 0.0, c, 0.0).is_err());
        let c = LogitModel::flat(&schema, 0.0).coefficients().to_vec();
        assert!(LogitModel::new(&schema, 0.0, c, -1.0).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let schema = FeatureSchema::survey();
        let mut model = LogitModel::flat(&schema, -1.234_567_890_123);
        model.set_coefficient(5, 3, 0.1 + 0.2);
        model.random_intercept_sd = 0.3;
        let again = LogitModel::from_json_str(&schema, &model.to_json_string(&schema)).unwrap();
        assert_eq!(model, again);
    }

    proptest! {
        #[test]
        fn sigmoid_is_bounded_and_monotone(eta in -20.0f64..20.0, bump in 1e-3f64..5.0) {
            let p = sigmoid(eta);
            prop_assert!(p > 0.0 && p < 1.0);
            prop_assert!(sigmoid(eta + bump) > p);
        }

        #[test]
        fn probability_increases_with_each_coefficient(
            levels in proptest::collection::vec(0u8..2, 10),
            var in 0usize..10,
            bump in 1e-3f64..3.0,
        ) {
            let schema = FeatureSchema::survey();
            let mut model = LogitModel::flat(&schema, -1.1);
            let mut ind = levels.clone();
            ind[var] = 1;
            let before = purchase_probability(&model, &ind, 0.0).unwrap();
            model.set_coefficient(var, 1, bump);
            let after = purchase_probability(&model, &ind, 0.0).unwrap();
            prop_assert!(after > before);
            prop_assert!(after > 0.0 && after < 1.0);
        }
    }
}
