//! Profile perception: maps free text to schema factor levels and keeps the
//! remaining clauses as contextual details.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{AgentError, Result};
use crate::llm::{Backend, ChatMessage, ChatRequest};
use crate::schema::FeatureSchema;
use crate::store::{age_bracket, distance_bracket, income_bracket};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub profile_id: String,
    pub text: String,
}

impl UserProfile {
    pub fn new(profile_id: impl Into<String>, text: impl Into<String>) -> Self {
        UserProfile {
            profile_id: profile_id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedFactor {
    pub variable: String,
    pub level_label: String,
    pub raw_phrase: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedProfile {
    /// In schema order, at most one per variable.
    pub factors: Vec<ParsedFactor>,
    pub contextual_details: Vec<String>,
    pub location: Option<String>,
}

impl ParsedProfile {
    pub fn factor(&self, variable: &str) -> Option<&ParsedFactor> {
        self.factors.iter().find(|f| f.variable == variable)
    }
}

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).unwrap()
}

static CLAUSE_SPLIT: LazyLock<Regex> = LazyLock::new(|| re(r"[.;!?]+(?:\s+|$)|,\s+|\n+"));

static AGE: LazyLock<Vec<Regex>> = LazyLock::new(|| {
    vec![
        re(r"(?i)\b(\d{1,3})[- ]years?[- ]old\b"),
        re(r"(?i)\baged?\s+(\d{1,3})\b"),
        re(r"(?i)\b(?:i am|i'm)\s+(\d{1,3})\b(?:\s*(?:years|$|[.,]))"),
    ]
});

static GENDER: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    vec![
        (re(r"(?i)\b(?:female|woman|mother|wife|lady|girl)\b"), "Female"),
        (re(r"(?i)\b(?:male|man|father|husband|gentleman|guy)\b"), "Male"),
    ]
});

static EDUCATION: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    vec![
        (
            re(r"(?i)\b(?:less than (?:a )?high school(?: education)?|did(?: not|n't) finish high school|dropped out of (?:high )?school|left school (?:after|in|at) (?:the )?\w+(?: grade)?|no high school diploma|never finished high school)"),
            "Less than high school",
        ),
        (
            re(r"(?i)\b(?:bachelor'?s?(?: degree)?|master'?s?(?: degree)?|ph\.?d\.?|doctorate|college degree|university degree|graduated from (?:college|university)|four-year degree)(?: in [a-z]+(?: [a-z]+)?)?"),
            "College degrees",
        ),
        (
            re(r"(?i)\b(?:some college(?: education)?|associate'?s? degree|attended (?:community )?college|community college)"),
            "Some college",
        ),
        (
            re(r"(?i)\b(?:high school (?:diploma|degree|education|graduate)|graduated from high school|finished high school|GED)\b"),
            "High school degree",
        ),
    ]
});

static INCOME_CUE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:income|salary|earn(?:s|ing)?|make|makes|making|annually|a year|per year|/year|yearly|household)\b|/year")
});
static MONEY_PHRASE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)(?:(?:an?\s+)?(?:annual|yearly|household)?\s*(?:income|salary)\s+(?:of\s+|is\s+|around\s+|about\s+)*|earn(?:s|ing)?\s+(?:about\s+|around\s+)?|mak(?:e|es|ing)\s+(?:about\s+|around\s+)?)?\$\s?(\d{1,3}(?:,\d{3})+|\d+(?:\.\d+)?)\s*(k\b|thousand\b)?(?:\s*(?:/\s*year|per year|a year|annually|yearly))?")
});

static HOME: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    vec![
        (
            re(r"(?i)\b(?:i|we)\s+(?:rent|am renting|are renting)\b(?:\s+(?:an?|my|our|the)\s+\w+)?|\b(?:renter|tenant)\b|\brent(?:s|ing)? (?:an?|my|our|the) (?:apartment|home|house|place|unit|condo)\b"),
            "Rent",
        ),
        (
            re(r"(?i)\b(?:i|we)\s+own\s+(?:my|our|a|the)\s+(?:own\s+)?(?:home|house|condo|property|place)\b|\bhomeowner\b|\bown(?:s|ing)? (?:a|my|our|the) (?:home|house|condo)\b"),
            "Own",
        ),
    ]
});

static DISTANCE_WORDS: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    vec![
        (re(r"(?i)\b(?:on the water|waterfront|beachfront|oceanfront|on the (?:beach|coast|shore|bay))\b"), "On the water"),
        (re(r"(?i)\b(?:near|close to|next to|by) the (?:water|coast|shore|beach|gulf)\b"), "Near the water"),
    ]
});
static DISTANCE_MILES: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:(more than|over|about|around|roughly|within)\s+)?(\d+(?:\.\d+)?)\s*(?:-|to|–)?\s*(?:\d+\s*)?miles?\s+(?:from|away from|inland from|off|of)\s+(?:the\s+)?(?:coast|water|shore|gulf|ocean|sea|beach)\b")
});

static BELIEF: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(?:believe|think|feel|expect|perceive|seems?|in my (?:view|opinion)|my sense)\b"));
static DIR_INCREASED: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:increas\w*|more|ris(?:en|ing|e)|grown|grow\w*|stronger|worse(?:ned)?|intensif\w*|frequent)\b")
});
static DIR_DECREASED: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(?:decreas\w*|fewer|less|declin\w*|weaker|milder|dropped|shrunk)\b"));
static DIR_SAME: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(?:about the same|(?:stayed|remained|stays) (?:about )?the same|unchanged|not changed|no change|as (?:strong|often|frequent) as)\b")
});
static HURRICANE_STRENGTH: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)hurricanes?.*\b(?:strength|strong|stronger|weaker|intens\w*|severe|powerful)\b|\b(?:strength|intensity) of hurricanes"));
static HURRICANE_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(?:number of hurricanes|hurricanes?.*\b(?:frequen\w*|often|number|count|more|fewer)\b)"));
static FLOODING: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\bflood(?:s|ing)?\b"));

static CLIMATE: LazyLock<Vec<(Regex, &'static str)>> = LazyLock::new(|| {
    vec![
        (
            re(r"(?i)(?:do(?:n't| not) (?:believe|think)[^.]*climate change|climate change (?:is not|isn't) (?:real|happening)|climate change is a hoax|skeptic\w* (?:of|about) climate change)"),
            "Not happening",
        ),
        (
            re(r"(?i)(?:believe[^.]*climate change|climate change is (?:real|happening)|accept (?:that )?climate change)"),
            "Happening",
        ),
    ]
});

static LOCATION_VERB: LazyLock<Regex> = LazyLock::new(|| {
    re(r"\b(?:[Ll]ive|[Ll]ives|[Ll]iving|[Rr]eside|[Rr]esides|[Rr]esiding|[Bb]ased|[Ll]ocated)\s+(?:in|near)\s+([A-Z][A-Za-z.'-]+(?:\s+[A-Z][A-Za-z.'-]+)*(?:,\s*[A-Z][A-Za-z]+(?:\s+[A-Z][A-Za-z]+)?)?)")
});
static LOCATION_IN: LazyLock<Regex> =
    LazyLock::new(|| re(r"\bin\s+([A-Z][A-Za-z.'-]+(?:\s+[A-Z][A-Za-z.'-]+)*(?:,\s*[A-Z][A-Za-z]+)?)"));

const NOT_PLACES: [&str; 14] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December", "Hurricane", "I",
];

const STOPWORDS: [&str; 62] = [
    "i", "i'm", "im", "am", "a", "an", "the", "and", "with", "of", "in", "to", "my", "me", "is",
    "are", "was", "have", "has", "had", "hold", "holds", "holding", "who", "as", "at", "on",
    "for", "year", "years", "old", "per", "annual", "annually", "income", "salary", "earn",
    "earns", "earning", "make", "makes", "live", "lives", "living", "reside", "resides", "person",
    "someone", "about", "around", "currently", "our", "we", "he", "she", "his", "her", "be",
    "that", "this", "yearly", "household",
];

struct Hit {
    variable: &'static str,
    level: String,
    span: Range<usize>,
}

fn first_hit(text: &str, patterns: &[(Regex, &'static str)], variable: &'static str) -> Option<Hit> {
    patterns.iter().find_map(|(re, level)| {
        re.find(text).map(|m| Hit {
            variable,
            level: level.to_string(),
            span: m.range(),
        })
    })
}

fn detect_age(text: &str) -> Option<Hit> {
    AGE.iter().find_map(|re| {
        re.captures_iter(text).find_map(|c| {
            let years: u32 = c[1].parse().ok()?;
            Some(Hit {
                variable: "age",
                level: age_bracket(years)?.to_string(),
                span: c.get(0).unwrap().range(),
            })
        })
    })
}

fn detect_income(text: &str, clauses: &[Range<usize>]) -> Option<Hit> {
    for m in MONEY_PHRASE.captures_iter(text) {
        let whole = m.get(0).unwrap();
        let clause = clauses
            .iter()
            .find(|c| c.contains(&whole.start()))
            .cloned()
            .unwrap_or(0..text.len());
        if !INCOME_CUE.is_match(&text[clause]) {
            continue;
        }
        let Ok(mut amount) = m[1].replace(',', "").parse::<f64>() else {
            continue;
        };
        if m.get(2).is_some() {
            amount *= 1000.0;
        }
        return Some(Hit {
            variable: "income",
            level: income_bracket(amount).to_string(),
            span: whole.range(),
        });
    }
    None
}

fn detect_distance(text: &str) -> Option<Hit> {
    if let Some(c) = DISTANCE_MILES.captures(text) {
        let mut miles: f64 = c[2].parse().ok()?;
        if matches!(c.get(1).map(|m| m.as_str().to_lowercase()).as_deref(), Some("more than" | "over")) {
            miles += 0.5;
        }
        return Some(Hit {
            variable: "distance_from_coast",
            level: distance_bracket(miles).to_string(),
            span: c.get(0).unwrap().range(),
        });
    }
    first_hit(text, &DISTANCE_WORDS, "distance_from_coast")
}

fn direction(clause: &str) -> Option<&'static str> {
    if DIR_SAME.is_match(clause) {
        Some("About the same")
    } else if DIR_DECREASED.is_match(clause) {
        Some("Decreased")
    } else if DIR_INCREASED.is_match(clause) {
        Some("Increased")
    } else {
        None
    }
}

/// Perceived-trend beliefs: one per clause that carries a belief cue.
fn detect_beliefs(text: &str, clauses: &[Range<usize>]) -> Vec<Hit> {
    let mut hits: Vec<Hit> = Vec::new();
    for c in clauses {
        let clause = &text[c.clone()];
        if !BELIEF.is_match(clause) || clause.to_lowercase().contains("climate change") {
            continue;
        }
        let Some(dir) = direction(clause) else { continue };
        let variable = if HURRICANE_STRENGTH.is_match(clause) {
            "hurricane_strength"
        } else if HURRICANE_NUMBER.is_match(clause) {
            "hurricane_number"
        } else if FLOODING.is_match(clause) {
            "flood_amount"
        } else {
            continue;
        };
        if hits.iter().all(|h| h.variable != variable) {
            hits.push(Hit {
                variable,
                level: dir.to_string(),
                span: c.clone(),
            });
        }
    }
    hits
}

fn detect_location(text: &str) -> Option<(String, Range<usize>)> {
    let from = |c: regex::Captures| {
        let m = c.get(1).unwrap();
        let first = m.as_str().split_whitespace().next().unwrap_or("");
        (!NOT_PLACES.contains(&first)).then(|| (m.as_str().trim_end_matches('.').to_string(), c.get(0).unwrap().range()))
    };
    LOCATION_VERB
        .captures_iter(text)
        .find_map(from)
        .or_else(|| LOCATION_IN.captures_iter(text).find_map(from))
}

fn clause_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for m in CLAUSE_SPLIT.find_iter(text) {
        if m.start() > start {
            out.push(start..m.start());
        }
        start = m.end();
    }
    if start < text.len() {
        out.push(start..text.len());
    }
    out
}

fn is_filler(text: &str) -> bool {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .all(|w| STOPWORDS.contains(&w.to_lowercase().as_str()))
}

fn residual_details(text: &str, clauses: &[Range<usize>], spans: &[Range<usize>]) -> Vec<String> {
    let mut details = Vec::new();
    for c in clauses {
        let mut kept = String::new();
        let mut pos = c.start;
        let mut inside: Vec<&Range<usize>> = spans
            .iter()
            .filter(|s| s.start < c.end && s.end > c.start)
            .collect();
        inside.sort_by_key(|s| s.start);
        for s in inside {
            if s.start > pos {
                kept.push_str(&text[pos..s.start]);
            }
            pos = pos.max(s.end);
        }
        if pos < c.end {
            kept.push_str(&text[pos..c.end]);
        }
        let kept = kept.split_whitespace().collect::<Vec<_>>().join(" ");
        let kept = kept.trim_matches(|ch: char| ch.is_whitespace() || ",;:-".contains(ch));
        if !kept.is_empty() && !is_filler(kept) {
            details.push(kept.to_string());
        }
    }
    details
}

/// Deterministic keyword and number matching against the schema levels.
pub fn perceive_rules(profile: &UserProfile, schema: &FeatureSchema) -> Result<ParsedProfile> {
    let text = profile.text.as_str();
    if text.trim().is_empty() {
        return Err(AgentError::Perception(format!("profile `{}` is empty", profile.profile_id)));
    }
    let clauses = clause_ranges(text);
    let mut hits: Vec<Hit> = Vec::new();
    hits.extend(detect_age(text));
    hits.extend(first_hit(text, &GENDER, "gender"));
    hits.extend(first_hit(text, &EDUCATION, "education"));
    hits.extend(detect_income(text, &clauses));
    hits.extend(first_hit(text, &HOME, "home_ownership"));
    hits.extend(detect_distance(text));
    hits.extend(detect_beliefs(text, &clauses));
    hits.extend(first_hit(text, &CLIMATE, "climate_change_belief"));

    let location = detect_location(text);
    let mut spans: Vec<Range<usize>> = hits.iter().map(|h| h.span.clone()).collect();
    if let Some((_, span)) = &location {
        spans.push(span.clone());
    }

    let mut factors = Vec::new();
    for var in &schema.variables {
        let Some(hit) = hits.iter().find(|h| h.variable == var.name) else { continue };
        let Some(li) = var.level_index(&hit.level) else { continue };
        factors.push(ParsedFactor {
            variable: var.name.clone(),
            level_label: var.levels[li].label.clone(),
            raw_phrase: text[hit.span.clone()].trim().to_string(),
        });
    }
    if factors.is_empty() {
        return Err(AgentError::Perception(format!(
            "no survey factor could be identified in profile `{}`",
            profile.profile_id
        )));
    }
    Ok(ParsedProfile {
        factors,
        contextual_details: residual_details(text, &clauses, &spans),
        location: location.map(|(l, _)| l),
    })
}

const PERCEPTION_INSTRUCTIONS: &str = "Extract survey factors from the profile. For each factor \
you can identify, write one line `variable = level` using only these variables and levels:";

fn llm_factors(
    profile: &UserProfile,
    schema: &FeatureSchema,
    llm: &dyn Backend,
) -> Result<Vec<(usize, usize)>> {
    let mut catalogue = String::from(PERCEPTION_INSTRUCTIONS);
    for v in &schema.variables {
        let levels: Vec<&str> = v.levels.iter().map(|l| l.label.as_str()).collect();
        catalogue.push_str(&format!("\n{}: {}", v.name, levels.join(" | ")));
    }
    let request = ChatRequest::new(vec![
        ChatMessage::system(catalogue),
        ChatMessage::user(profile.text.clone()),
    ]);
    let reply = llm.complete(&request)?.content;
    let mut out = Vec::new();
    for line in reply.lines() {
        let Some((var, level)) = line.split_once('=') else { continue };
        let var = var.trim().trim_start_matches(['-', '*', ' ']);
        if let Ok(pos) = schema.locate(var, level.trim()) {
            out.push(pos);
        } else {
            tracing::debug!(line, "perception output names no schema level");
        }
    }
    Ok(out)
}

/// Rule-based perception, optionally refined by an LLM. Levels the LLM names
/// that exist in the schema replace the rule-based level for that variable;
/// anything else falls back to the rules.
pub fn perceive(profile: &UserProfile, schema: &FeatureSchema, llm: Option<&dyn Backend>) -> Result<ParsedProfile> {
    let rules = perceive_rules(profile, schema);
    let Some(llm) = llm else { return rules };
    let from_llm = llm_factors(profile, schema, llm)?;
    let mut parsed = match rules {
        Ok(p) => p,
        Err(_) if !from_llm.is_empty() => ParsedProfile {
            contextual_details: vec![profile.text.trim().to_string()],
            ..ParsedProfile::default()
        },
        Err(e) => return Err(e),
    };
    for (vi, li) in from_llm {
        let var = &schema.variables[vi];
        let label = var.levels[li].label.clone();
        match parsed.factors.iter_mut().find(|f| f.variable == var.name) {
            Some(f) => f.level_label = label,
            None => parsed.factors.push(ParsedFactor {
                variable: var.name.clone(),
                level_label: label,
                raw_phrase: var.display.clone(),
            }),
        }
    }
    parsed
        .factors
        .sort_by_key(|f| schema.variable_index(&f.variable).unwrap_or(usize::MAX));
    Ok(parsed)
}
