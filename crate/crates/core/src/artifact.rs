//! Provenance headers written at the top of every output artifact.

use std::fmt::Write as _;

/// Ordered `key: value` pairs rendered as `# key: value` lines. Contains no
/// wall-clock data so identical runs produce identical files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArtifactHeader {
    fields: Vec<(String, String)>,
}

impl ArtifactHeader {
    pub fn new(artifact: &str) -> Self {
        ArtifactHeader {
            fields: vec![("artifact".to_string(), artifact.to_string())],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            let v = v.replace('\n', " ");
            writeln!(out, "# {k}: {v}").unwrap();
        }
        out
    }

    /// Parses the leading `# key: value` lines of a text artifact.
    pub fn parse(text: &str) -> Self {
        let fields = text
            .lines()
            .map_while(|l| l.strip_prefix("# "))
            .filter_map(|l| l.split_once(": "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        ArtifactHeader { fields }
    }

    /// The text after any leading `#` comment lines.
    pub fn strip(text: &str) -> &str {
        let mut rest = text;
        while rest.starts_with('#') {
            rest = rest.split_once('\n').map_or("", |(_, tail)| tail);
        }
        rest
    }
}
