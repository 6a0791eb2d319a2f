//! Canonical single- and two-factor profiles for benchmark evaluation.

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::agent::UserProfile;
use crate::schema::{normalize_label, FeatureSchema};
use crate::synth::{BivariateTable, ProbabilityTable};

/// Appended to every generated profile.
pub const EVAL_CITY_SENTENCE: &str = "I live in Houston, Texas.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Marginal,
    Bivariate,
}

impl CaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseKind::Marginal => "marginal",
            CaseKind::Bivariate => "bivariate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub kind: CaseKind,
    pub profile: UserProfile,
    pub benchmark_probability: f64,
    /// Benchmark table the value came from, e.g. `income` or `education:gender`.
    pub source: String,
    /// (variable, level) pairs the profile encodes.
    pub levels: Vec<(String, String)>,
}

/// One first-person sentence stating `level` of `variable`.
pub fn factor_sentence(variable: &str, level: &str) -> Result<String> {
    let unknown = || EvalError::Input(format!("no canonical phrasing for {variable} = {level}"));
    let key = normalize_label(level);
    let pick = |table: &[(&str, &str)]| {
        table
            .iter()
            .find(|(l, _)| normalize_label(l) == key)
            .map(|(_, s)| s.to_string())
            .ok_or_else(unknown)
    };
    match variable {
        "age" => pick(&[
            ("18–24", "I am 21 years old."),
            ("25–34", "I am 30 years old."),
            ("35–44", "I am 40 years old."),
            ("45–54", "I am 50 years old."),
            ("55–64", "I am 60 years old."),
            ("65+", "I am 70 years old."),
        ]),
        "gender" => pick(&[("Female", "I am a woman."), ("Male", "I am a man.")]),
        "education" => pick(&[
            ("Less than high school", "I did not finish high school."),
            ("High school degree", "I have a high school diploma."),
            ("Some college", "I have some college education."),
            ("College degrees", "I have a bachelor's degree."),
        ]),
        "income" => pick(&[
            ("Under $10,000", "My annual income is $5,000."),
            ("$10–19,999", "My annual income is $15,000."),
            ("$20–29,999", "My annual income is $25,000."),
            ("$30–39,999", "My annual income is $35,000."),
            ("$40–49,999", "My annual income is $45,000."),
            ("$50–74,999", "My annual income is $62,000."),
            ("$75–99,999", "My annual income is $87,000."),
            ("$100,000+", "My annual income is $120,000."),
        ]),
        "home_ownership" => pick(&[("Own", "I own my home."), ("Rent", "I rent my home.")]),
        "distance_from_coast" => pick(&[
            ("On the water", "My home is on the water."),
            ("Near the water", "My home is near the coast."),
            ("Within 2–5 miles", "My home is 3 miles from the coast."),
            ("5–10 miles", "My home is 7 miles from the coast."),
            ("11–30 miles", "My home is 20 miles from the coast."),
            ("31–60 miles", "My home is 45 miles from the coast."),
            ("> 60 miles", "My home is 80 miles from the coast."),
        ]),
        "flood_amount" => pick(&[
            ("Decreased", "I believe the amount of flooding here has decreased."),
            ("About the same", "I believe the amount of flooding here has stayed about the same."),
            ("Increased", "I believe the amount of flooding here has increased."),
        ]),
        "hurricane_number" => pick(&[
            ("Decreased", "I believe hurricanes have become less frequent."),
            ("About the same", "I believe hurricanes occur about as often as before."),
            ("Increased", "I believe hurricanes have become more frequent."),
        ]),
        "hurricane_strength" => pick(&[
            ("Decreased", "I believe hurricanes have become weaker."),
            ("About the same", "I believe hurricanes are about as strong as before."),
            ("Increased", "I believe hurricanes have become stronger."),
        ]),
        "climate_change_belief" => pick(&[
            ("Happening", "I believe climate change is happening."),
            ("Not happening", "I do not believe climate change is happening."),
        ]),
        _ => Err(unknown()),
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

/// One case per defined (variable, level) entry, in schema order.
pub fn marginal_cases(schema: &FeatureSchema, tables: &[ProbabilityTable]) -> Result<Vec<EvalCase>> {
    let mut cases = Vec::new();
    for var in &schema.variables {
        let Some(table) = tables.iter().find(|t| t.variable == var.name) else { continue };
        for level in &var.levels {
            let Some(p) = table.probability(&level.label) else { continue };
            let text = format!("{} {EVAL_CITY_SENTENCE}", factor_sentence(&var.name, &level.label)?);
            let case_id = format!("{}/{}", var.name, slug(&level.label));
            cases.push(EvalCase {
                profile: UserProfile::new(case_id.clone(), text),
                case_id,
                kind: CaseKind::Marginal,
                benchmark_probability: p,
                source: var.name.clone(),
                levels: vec![(var.name.clone(), level.label.clone())],
            });
        }
    }
    if cases.is_empty() {
        return Err(EvalError::Input("benchmark tables yield no marginal cases".into()));
    }
    Ok(cases)
}

/// One case per defined level pair of every requested table.
pub fn bivariate_cases(
    schema: &FeatureSchema,
    tables: &[BivariateTable],
    pairs: &[(String, String)],
) -> Result<Vec<EvalCase>> {
    let mut cases = Vec::new();
    for (a, b) in pairs {
        let table = tables
            .iter()
            .find(|t| &t.variable_a == a && &t.variable_b == b)
            .ok_or_else(|| EvalError::Input(format!("no bivariate table for {a}:{b}")))?;
        let va = schema.variable(a).map_err(|e| EvalError::Input(e.to_string()))?;
        let vb = schema.variable(b).map_err(|e| EvalError::Input(e.to_string()))?;
        if va.tier == vb.tier {
            tracing::warn!(a, b, "bivariate pair shares a significance tier");
        }
        for la in &va.levels {
            for lb in &vb.levels {
                let Some(p) = table.entry(&la.label, &lb.label).and_then(|e| e.probability) else { continue };
                let text = format!(
                    "{} {} {EVAL_CITY_SENTENCE}",
                    factor_sentence(a, &la.label)?,
                    factor_sentence(b, &lb.label)?
                );
                let case_id = format!("{a}:{b}/{}/{}", slug(&la.label), slug(&lb.label));
                cases.push(EvalCase {
                    profile: UserProfile::new(case_id.clone(), text),
                    case_id,
                    kind: CaseKind::Bivariate,
                    benchmark_probability: p,
                    source: table.pair_name(),
                    levels: vec![(a.clone(), la.label.clone()), (b.clone(), lb.label.clone())],
                });
            }
        }
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::perceive_rules;
    use crate::synth::published_targets;

    #[test]
    fn every_canonical_profile_perceives_exactly_its_level() {
        let schema = FeatureSchema::survey();
        let cases = marginal_cases(&schema, &published_targets()).unwrap();
        assert_eq!(cases.len(), 40);
        for case in &cases {
            let parsed = perceive_rules(&case.profile, &schema).unwrap();
            let got: Vec<(String, String)> = parsed
                .factors
                .iter()
                .map(|f| (f.variable.clone(), f.level_label.clone()))
                .collect();
            assert_eq!(got, case.levels, "{}", case.profile.text);
            assert_eq!(parsed.location.as_deref(), Some("Houston, Texas"), "{}", case.profile.text);
        }
    }

    #[test]
    fn case_ids_are_unique() {
        let cases = marginal_cases(&FeatureSchema::survey(), &published_targets()).unwrap();
        let mut ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 40);
    }

    #[test]
    fn distance_by_flood_grid_has_21_cases() {
        let schema = FeatureSchema::survey();
        let va = schema.variable("distance_from_coast").unwrap();
        let vb = schema.variable("flood_amount").unwrap();
        let mut entries = Vec::new();
        for la in &va.levels {
            for lb in &vb.levels {
                entries.push(crate::synth::BivariateEntry {
                    level_a: la.label.clone(),
                    level_b: lb.label.clone(),
                    probability: Some(0.2),
                    support: Some(1),
                    purchases: Some(0),
                });
            }
        }
        let table = BivariateTable {
            variable_a: "distance_from_coast".into(),
            variable_b: "flood_amount".into(),
            entries,
        };
        let pairs = [("distance_from_coast".to_string(), "flood_amount".to_string())];
        let cases = bivariate_cases(&schema, &[table], &pairs).unwrap();
        assert_eq!(cases.len(), 21);
        for case in &cases {
            let parsed = perceive_rules(&case.profile, &schema).unwrap();
            let got: Vec<(String, String)> =
                parsed.factors.iter().map(|f| (f.variable.clone(), f.level_label.clone())).collect();
            assert_eq!(got, case.levels, "{}", case.profile.text);
        }
    }
}
