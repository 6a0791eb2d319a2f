//! Fixture files compiled into the library so tests and the CLI work offline.

pub const SURVEY_SCHEMA: &str = include_str!("../fixtures/schema_survey.toml");
pub const PUBLISHED_CSV: &str = include_str!("../fixtures/survey_marginals.csv");
pub const PROMPT_TEMPLATE: &str = include_str!("../assets/prompt_template.toml");
pub const ROLLER_COASTER_PROFILE: &str = include_str!("../fixtures/trajectory/roller_coaster_profile.txt");
pub const ROLLER_COASTER_EVENTS: &str = include_str!("../fixtures/trajectory/roller_coaster.events");

/// Reference probability series for the bundled trajectory, in percent.
pub const ROLLER_COASTER_SERIES: [f64; 7] = [28.0, 32.5, 30.5, 38.2, 34.5, 41.8, 36.6];

const MOCKS: [(&str, &str); 6] = [
    ("roller_coaster", include_str!("../fixtures/mocks/roller_coaster.toml")),
    ("cities", include_str!("../fixtures/mocks/cities.toml")),
    ("occupations", include_str!("../fixtures/mocks/occupations.toml")),
    ("social", include_str!("../fixtures/mocks/social.toml")),
    ("flood_experience", include_str!("../fixtures/mocks/flood_experience.toml")),
    ("claims", include_str!("../fixtures/mocks/claims.toml")),
];

/// Scenario suites in presentation order.
pub const SUITES: [(&str, &str); 5] = [
    ("cities", include_str!("../fixtures/suites/cities.toml")),
    ("occupations", include_str!("../fixtures/suites/occupations.toml")),
    ("social", include_str!("../fixtures/suites/social.toml")),
    ("flood_experience", include_str!("../fixtures/suites/flood_experience.toml")),
    ("claims", include_str!("../fixtures/suites/claims.toml")),
];

pub fn mock_script(name: &str) -> Option<&'static str> {
    MOCKS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn mock_names() -> impl Iterator<Item = &'static str> {
    MOCKS.iter().map(|(n, _)| *n)
}

pub fn suite(name: &str) -> Option<&'static str> {
    SUITES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
