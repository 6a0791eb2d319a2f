//! Maps numbers in free text (ages, dollar amounts, miles) to schema bracket
//! labels so that retrieval does not depend on interval arithmetic.

use std::sync::LazyLock;

use regex::Regex;

use crate::schema::FeatureSchema;

static MONEY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\$\s?(\d{1,3}(?:,\d{3})+|\d+(?:\.\d+)?)\s*(k\b|thousand\b)?").unwrap()
});
static AGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(\d{1,3})[- ]years?[- ]old\b|\baged?\s+(\d{1,3})\b").unwrap()
});
static MILES: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(\d+(?:\.\d+)?)\s*(?:-\s*)?miles?\b").unwrap());

/// Dollar amounts in `text`, with `k`/`thousand` suffixes applied.
pub fn parse_money(text: &str) -> Vec<f64> {
    MONEY
        .captures_iter(text)
        .filter_map(|c| {
            let v: f64 = c[1].replace(',', "").parse().ok()?;
            Some(if c.get(2).is_some() { v * 1000.0 } else { v })
        })
        .collect()
}

pub(crate) fn parse_ages(text: &str) -> Vec<u32> {
    AGE.captures_iter(text)
        .filter_map(|c| c.get(1).or_else(|| c.get(2))?.as_str().parse().ok())
        .collect()
}

pub(crate) fn parse_miles(text: &str) -> Vec<f64> {
    MILES
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

pub fn income_bracket(amount: f64) -> &'static str {
    match amount {
        a if a < 10_000.0 => "Under $10,000",
        a if a < 20_000.0 => "$10–19,999",
        a if a < 30_000.0 => "$20–29,999",
        a if a < 40_000.0 => "$30–39,999",
        a if a < 50_000.0 => "$40–49,999",
        a if a < 75_000.0 => "$50–74,999",
        a if a < 100_000.0 => "$75–99,999",
        _ => "$100,000+",
    }
}

/// `None` below the surveyed adult range.
pub fn age_bracket(years: u32) -> Option<&'static str> {
    Some(match years {
        0..=17 => return None,
        18..=24 => "18–24",
        25..=34 => "25–34",
        35..=44 => "35–44",
        45..=54 => "45–54",
        55..=64 => "55–64",
        _ => "65+",
    })
}

/// Distance bands; under two miles counts as near the water.
pub fn distance_bracket(miles: f64) -> &'static str {
    match miles {
        m if m < 2.0 => "Near the water",
        m if m <= 5.0 => "Within 2–5 miles",
        m if m <= 10.0 => "5–10 miles",
        m if m <= 30.0 => "11–30 miles",
        m if m <= 60.0 => "31–60 miles",
        _ => "> 60 miles",
    }
}

/// Appends `Display Label` annotations for every bracketable number found.
#[derive(Debug, Clone)]
pub struct QueryNormalizer {
    age: Option<String>,
    income: Option<String>,
    distance: Option<String>,
}

impl QueryNormalizer {
    pub fn new(schema: &FeatureSchema) -> Self {
        let display = |name: &str| schema.variable(name).ok().map(|v| v.display.clone());
        QueryNormalizer {
            age: display("age"),
            income: display("income"),
            distance: display("distance_from_coast"),
        }
    }

    pub fn annotate(&self, query: &str) -> String {
        let mut out = query.to_string();
        if let Some(d) = &self.income {
            for amount in parse_money(query).into_iter().filter(|&a| a >= 1000.0) {
                out.push_str(&format!(" | {d} {}", income_bracket(amount)));
            }
        }
        if let Some(d) = &self.age {
            for label in parse_ages(query).into_iter().filter_map(age_bracket) {
                out.push_str(&format!(" | {d} {label}"));
            }
        }
        if let Some(d) = &self.distance {
            for miles in parse_miles(query) {
                out.push_str(&format!(" | {d} {}", distance_bracket(miles)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn money_parsing_handles_commas_and_suffixes() {
        assert_eq!(parse_money("earning $52,000/year"), vec![52_000.0]);
        assert_eq!(parse_money("about $65k a year"), vec![65_000.0]);
        assert_eq!(parse_money("$1,250,000 house"), vec![1_250_000.0]);
        assert_eq!(parse_money("$7.5 thousand"), vec![7_500.0]);
    }

    #[test]
    fn brackets_cover_boundaries() {
        assert_eq!(income_bracket(9_999.0), "Under $10,000");
        assert_eq!(income_bracket(10_000.0), "$10–19,999");
        assert_eq!(income_bracket(52_000.0), "$50–74,999");
        assert_eq!(income_bracket(100_000.0), "$100,000+");
        assert_eq!(age_bracket(17), None);
        assert_eq!(age_bracket(33), Some("25–34"));
        assert_eq!(age_bracket(65), Some("65+"));
        assert_eq!(distance_bracket(1.0), "Near the water");
        assert_eq!(distance_bracket(5.0), "Within 2–5 miles");
        assert_eq!(distance_bracket(20.0), "11–30 miles");
        assert_eq!(distance_bracket(61.0), "> 60 miles");
    }

    #[test]
    fn bracket_labels_exist_in_schema() {
        let schema = FeatureSchema::survey();
        for a in [5e3, 15e3, 25e3, 35e3, 45e3, 60e3, 80e3, 2e5] {
            schema.locate("income", income_bracket(a)).unwrap();
        }
        for y in [20, 30, 40, 50, 60, 70] {
            schema.locate("age", age_bracket(y).unwrap()).unwrap();
        }
        for m in [1.0, 3.0, 7.0, 20.0, 45.0, 80.0] {
            schema.locate("distance_from_coast", distance_bracket(m)).unwrap();
        }
    }

    #[test]
    fn annotation_appends_labels() {
        let n = QueryNormalizer::new(&FeatureSchema::survey());
        assert_eq!(
            n.annotate("annual income $52,000"),
            "annual income $52,000 | Income $50–74,999"
        );
        assert_eq!(n.annotate("a 33-year-old"), "a 33-year-old | Age 25–34");
        assert_eq!(n.annotate("no numbers"), "no numbers");
    }
}
