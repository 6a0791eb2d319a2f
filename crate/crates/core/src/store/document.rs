use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, StoreError};
use crate::schema::{normalize_label, FeatureSchema, SignificanceTier};
use crate::synth::ProbabilityTable;

/// One statistic: the purchase probability of one level of one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDocument {
    pub variable: String,
    pub level_label: String,
    /// Rounded to three decimals so the rendered text quotes it exactly.
    pub probability: f64,
    pub tier: SignificanceTier,
    pub text: String,
}

impl FactorDocument {
    pub fn new(
        schema: &FeatureSchema,
        variable: &str,
        level_label: &str,
        probability: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(StoreError::Corpus(format!(
                "{variable}/{level_label}: probability {probability} outside [0, 1]"
            )));
        }
        let (vi, li) = schema.locate(variable, level_label)?;
        let var = &schema.variables[vi];
        let label = &var.levels[li].label;
        let probability = (probability * 1000.0).round() / 1000.0;
        Ok(FactorDocument {
            variable: var.name.clone(),
            level_label: label.clone(),
            probability,
            tier: var.tier,
            text: render(&var.display, label, probability, var.tier),
        })
    }

    pub fn key(&self) -> (String, String) {
        (self.variable.clone(), normalize_label(&self.level_label))
    }
}

fn render(display: &str, level: &str, probability: f64, tier: SignificanceTier) -> String {
    let tier = match tier {
        SignificanceTier::High => "High",
        SignificanceTier::Medium => "Medium",
        SignificanceTier::Low => "Low",
        SignificanceTier::Minimal => "Minimal",
    };
    format!("{display} {level}: purchase probability {probability:.3}, significance {tier}")
}

/// One document per (variable, level) from marginal tables. Every level of
/// the schema must be covered with a defined probability.
pub fn corpus_from_tables(schema: &FeatureSchema, tables: &[ProbabilityTable]) -> Result<Vec<FactorDocument>> {
    let mut docs = Vec::with_capacity(schema.n_levels_total());
    for var in &schema.variables {
        let table = tables
            .iter()
            .find(|t| t.variable == var.name)
            .ok_or_else(|| StoreError::Corpus(format!("no table for variable `{}`", var.name)))?;
        for level in &var.levels {
            let p = table.probability(&level.label).ok_or_else(|| {
                StoreError::Corpus(format!("no probability for {}/{}", var.name, level.label))
            })?;
            docs.push(FactorDocument::new(schema, &var.name, &level.label, p)?);
        }
    }
    Ok(docs)
}

/// The 40-document corpus of published marginals.
pub fn survey_corpus() -> Vec<FactorDocument> {
    let schema = FeatureSchema::survey();
    corpus_from_tables(&schema, &crate::synth::published_targets()).expect("bundled corpus is valid")
}

pub(crate) fn check_unique(docs: &[FactorDocument]) -> Result<()> {
    let mut seen = HashSet::new();
    for d in docs {
        if !seen.insert(d.key()) {
            return Err(StoreError::Corpus(format!(
                "duplicate document for {}/{}",
                d.variable, d.level_label
            )));
        }
    }
    Ok(())
}

pub fn save_corpus(path: &Path, docs: &[FactorDocument]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(docs)? + "\n")?;
    Ok(())
}

/// Loads a corpus file, re-rendering each document against `schema` so the
/// text always matches the stored fields.
pub fn load_corpus(schema: &FeatureSchema, path: &Path) -> Result<Vec<FactorDocument>> {
    let raw: Vec<FactorDocument> = serde_json::from_str(crate::artifact::ArtifactHeader::strip(&std::fs::read_to_string(path)?))?;
    let docs = raw
        .iter()
        .map(|d| {
            let fresh = FactorDocument::new(schema, &d.variable, &d.level_label, d.probability)?;
            if fresh.text != d.text {
                return Err(StoreError::Corpus(format!(
                    "document text `{}` does not match its fields (expected `{}`)",
                    d.text, fresh.text
                )));
            }
            Ok(fresh)
        })
        .collect::<Result<Vec<_>>>()?;
    check_unique(&docs)?;
    Ok(docs)
}
