//! Survey feature schema: the ten categorical variables, their levels and
//! significance tiers, plus the published marginal purchase probabilities
//! used as fit targets and as the retrieval corpus source.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema must not be empty")]
    Empty,
    #[error("variable `{0}` appears more than once")]
    DuplicateVariable(String),
    #[error("variable `{0}` has no levels")]
    NoLevels(String),
    #[error("variable `{variable}` has more than {max} levels")]
    TooManyLevels { variable: String, max: usize },
    #[error("variable `{variable}`: duplicate level label `{label}`")]
    DuplicateLabel { variable: String, label: String },
    #[error("variable `{variable}`: duplicate level code {code}")]
    DuplicateCode { variable: String, code: i32 },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{variable}` has no level `{level}`")]
    UnknownLevel { variable: String, level: String },
    #[error("unknown significance tier `{0}`")]
    UnknownTier(String),
    #[error("failed to read schema: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse schema: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Regression significance grouping. Ordered so that `High > Medium > Low > Minimal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignificanceTier {
    Minimal,
    Low,
    Medium,
    High,
}

impl SignificanceTier {
    pub fn as_str(self) -> &'static str {
        match self {
            SignificanceTier::High => "High",
            SignificanceTier::Medium => "Medium",
            SignificanceTier::Low => "Low",
            SignificanceTier::Minimal => "Minimal",
        }
    }
}

impl fmt::Display for SignificanceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignificanceTier {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(SignificanceTier::High),
            "medium" => Ok(SignificanceTier::Medium),
            "low" => Ok(SignificanceTier::Low),
            "minimal" => Ok(SignificanceTier::Minimal),
            other => Err(SchemaError::UnknownTier(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub label: String,
    /// Survey code; `None` where the source table prints no code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub display: String,
    pub tier: SignificanceTier,
    pub levels: Vec<Level>,
}

impl Variable {
    pub fn level_index(&self, label: &str) -> Option<usize> {
        let wanted = normalize_label(label);
        self.levels
            .iter()
            .position(|l| normalize_label(&l.label) == wanted)
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }
}

/// Case-, whitespace- and dash-insensitive form of a level label so that
/// `"$50-74,999"` and `"$50–74,999"` name the same level.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for ch in label.trim().chars() {
        let ch = match ch {
            '\u{2013}' | '\u{2014}' | '\u{2212}' => '-',
            c => c,
        };
        if ch.is_whitespace() {
            if !out.ends_with(' ') {
                out.push(' ');
            }
        } else {
            out.extend(ch.to_lowercase());
        }
    }
    out.replace("--", "-")
}

/// Level indices are stored as `u8` in populations.
pub const MAX_LEVELS: usize = u8::MAX as usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub variables: Vec<Variable>,
}

impl FeatureSchema {
    pub fn new(variables: Vec<Variable>) -> Result<Self, SchemaError> {
        let schema = FeatureSchema { variables };
        schema.validate()?;
        Ok(schema)
    }

    /// The ten survey variables of the Gulf Coast flood-insurance study.
    pub fn survey() -> Self {
        Self::from_toml_str(fixtures::SURVEY_SCHEMA).expect("built-in schema is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SchemaError> {
        let schema: FeatureSchema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.variables.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut names = HashSet::new();
        for var in &self.variables {
            if !names.insert(var.name.as_str()) {
                return Err(SchemaError::DuplicateVariable(var.name.clone()));
            }
            if var.levels.is_empty() {
                return Err(SchemaError::NoLevels(var.name.clone()));
            }
            if var.levels.len() > MAX_LEVELS {
                return Err(SchemaError::TooManyLevels {
                    variable: var.name.clone(),
                    max: MAX_LEVELS,
                });
            }
            let mut labels = HashSet::new();
            let mut codes = HashSet::new();
            for level in &var.levels {
                if !labels.insert(normalize_label(&level.label)) {
                    return Err(SchemaError::DuplicateLabel {
                        variable: var.name.clone(),
                        label: level.label.clone(),
                    });
                }
                if let Some(code) = level.code {
                    if !codes.insert(code) {
                        return Err(SchemaError::DuplicateCode {
                            variable: var.name.clone(),
                            code,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variable_index(&self, name: &str) -> Result<usize, SchemaError> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| SchemaError::UnknownVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&Variable, SchemaError> {
        Ok(&self.variables[self.variable_index(name)?])
    }

    /// Resolves `(variable, level label)` to `(variable index, level index)`.
    pub fn locate(&self, variable: &str, level: &str) -> Result<(usize, usize), SchemaError> {
        let vi = self.variable_index(variable)?;
        let li = self.variables[vi]
            .level_index(level)
            .ok_or_else(|| SchemaError::UnknownLevel {
                variable: variable.to_string(),
                level: level.to_string(),
            })?;
        Ok((vi, li))
    }

    /// Total number of (variable, level) pairs.
    pub fn n_levels_total(&self) -> usize {
        self.variables.iter().map(Variable::n_levels).sum()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.variables.iter().map(Variable::n_levels).collect()
    }
}

/// One published marginal purchase probability.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedMarginal {
    pub variable: &'static str,
    pub level: &'static str,
    pub probability: f64,
}

macro_rules! marginal {
    ($var:literal, $level:literal, $p:literal) => {
        PublishedMarginal {
            variable: $var,
            level: $level,
            probability: $p,
        }
    };
}

/// Marginal purchase probabilities by individual-level feature, in schema order.
pub const PUBLISHED_MARGINALS: [PublishedMarginal; 40] = [
    marginal!("age", "18–24", 0.233),
    marginal!("age", "25–34", 0.238),
    marginal!("age", "35–44", 0.242),
    marginal!("age", "45–54", 0.247),
    marginal!("age", "55–64", 0.251),
    marginal!("age", "65+", 0.256),
    marginal!("gender", "Female", 0.242),
    marginal!("gender", "Male", 0.262),
    marginal!("education", "Less than high school", 0.168),
    marginal!("education", "High school degree", 0.203),
    marginal!("education", "Some college", 0.244),
    marginal!("education", "College degrees", 0.288),
    marginal!("income", "Under $10,000", 0.128),
    marginal!("income", "$10–19,999", 0.149),
    marginal!("income", "$20–29,999", 0.174),
    marginal!("income", "$30–39,999", 0.201),
    marginal!("income", "$40–49,999", 0.232),
    marginal!("income", "$50–74,999", 0.265),
    marginal!("income", "$75–99,999", 0.301),
    marginal!("income", "$100,000+", 0.340),
    marginal!("home_ownership", "Own", 0.269),
    marginal!("home_ownership", "Rent", 0.113),
    marginal!("distance_from_coast", "On the water", 0.394),
    marginal!("distance_from_coast", "Near the water", 0.340),
    marginal!("distance_from_coast", "Within 2–5 miles", 0.290),
    marginal!("distance_from_coast", "5–10 miles", 0.242),
    marginal!("distance_from_coast", "11–30 miles", 0.201),
    marginal!("distance_from_coast", "31–60 miles", 0.165),
    marginal!("distance_from_coast", "> 60 miles", 0.133),
    marginal!("flood_amount", "Decreased", 0.220),
    marginal!("flood_amount", "About the same", 0.248),
    marginal!("flood_amount", "Increased", 0.278),
    marginal!("hurricane_number", "Decreased", 0.236),
    marginal!("hurricane_number", "About the same", 0.250),
    marginal!("hurricane_number", "Increased", 0.265),
    marginal!("hurricane_strength", "Decreased", 0.212),
    marginal!("hurricane_strength", "About the same", 0.241),
    marginal!("hurricane_strength", "Increased", 0.273),
    marginal!("climate_change_belief", "Happening", 0.255),
    marginal!("climate_change_belief", "Not happening", 0.233),
];
