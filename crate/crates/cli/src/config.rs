//! Run configuration: a TOML file whose values command-line flags override.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use insuragent_core::llm::RemoteConfig;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub schema: Option<PathBuf>,
    pub distribution: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Backend selector; commands pick their own default when unset.
    pub backend: Option<String>,
    pub embedder: String,
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        LlmConfig {
            backend: None,
            embedder: "hash".into(),
            endpoint: remote.endpoint,
            model: remote.model,
            embedding_model: remote.embedding_model,
            api_key_env: remote.api_key_env,
            temperature: 0.0,
            max_tokens: 1024,
            concurrency: remote.concurrency,
            timeout_secs: remote.timeout_secs,
            retries: remote.retries,
        }
    }
}

impl LlmConfig {
    pub fn remote(&self) -> RemoteConfig {
        RemoteConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            embedding_model: self.embedding_model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            retries: self.retries,
            concurrency: self.concurrency,
            ..RemoteConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    pub target_rate: Option<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n: 1_000_000, seed: 42, target_rate: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub reps: Option<usize>,
    /// `variable_a:variable_b` entries.
    pub pairs: Vec<String>,
    pub samples_per_decision: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            reps: None,
            pairs: vec!["education:gender".into(), "distance_from_coast:flood_amount".into()],
            samples_per_decision: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub llm: LlmConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.paths.all_mut() {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    /// Every configured input path must exist.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let p = &self.paths;
        for (key, path) in [
            ("schema", &p.schema),
            ("distribution", &p.distribution),
            ("targets", &p.targets),
            ("model", &p.model),
            ("benchmark", &p.benchmark),
            ("corpus", &p.corpus),
            ("index", &p.index),
            ("template", &p.template),
            ("fixtures", &p.fixtures),
        ] {
            if let Some(path) = path {
                if key == "distribution" && is_uniform_keyword(path) {
                    continue;
                }
                if !path.exists() {
                    return Err(CliError::Usage(format!("paths.{key}: {} does not exist", path.display())));
                }
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> Result<Vec<(String, String)>, CliError> {
        self.eval
            .pairs
            .iter()
            .map(|s| {
                s.split_once(':')
                    .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                    .filter(|(a, b)| !a.is_empty() && !b.is_empty() && a != b)
                    .ok_or_else(|| CliError::Usage(format!("bad pair `{s}`; expected `variable_a:variable_b`")))
            })
            .collect()
    }

    /// First 16 hex digits of the SHA-256 of the effective configuration.
    /// Input files enter by content rather than location, and the output
    /// directory is left out.
    pub fn hash(&self) -> String {
        let mut settings = self.clone();
        settings.paths.out_dir = None;
        for slot in settings.paths.all_mut() {
            if let Some(bytes) = slot.as_deref().and_then(|p| std::fs::read(p).ok()) {
                *slot = Some(PathBuf::from(format!("sha256:{}", hex16(&bytes))));
            }
        }
        hex16(toml::to_string(&settings).expect("config serializes").as_bytes())
    }
}

/// `uniform` in place of a distribution file selects equal level weights.
pub fn is_uniform_keyword(path: &Path) -> bool {
    path.file_name().is_some_and(|n| n == "uniform") && !path.exists()
}

fn hex16(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

impl PathsConfig {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 10] {
        [
            &mut self.schema,
            &mut self.distribution,
            &mut self.targets,
            &mut self.model,
            &mut self.benchmark,
            &mut self.corpus,
            &mut self.index,
            &mut self.template,
            &mut self.fixtures,
            &mut self.out_dir,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("model.json"), "{}").unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[paths]\nmodel = \"model.json\"\n[synth]\nseed = 7\n").unwrap();
        let c = RunConfig::load(&cfg).unwrap();
        assert_eq!(c.paths.model.as_deref(), Some(dir.path().join("model.json").as_path()));
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.synth.n, 1_000_000);
        c.check_inputs().unwrap();
    }

    #[test]
    fn missing_inputs_and_unknown_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.toml");
        std::fs::write(&cfg, "[paths]\nindex = \"nope.json\"\n").unwrap();
        assert!(matches!(RunConfig::load(&cfg).unwrap().check_inputs(), Err(CliError::Usage(_))));
        std::fs::write(&cfg, "[llm]\nbogus = 1\n").unwrap();
        assert!(matches!(RunConfig::load(&cfg), Err(CliError::Usage(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.synth.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);

        let dir = tempfile::tempdir().unwrap();
        let (x, y) = (dir.path().join("x.json"), dir.path().join("y.json"));
        std::fs::write(&x, "{}").unwrap();
        std::fs::write(&y, "{}").unwrap();
        let mut c = RunConfig::default();
        let mut d = RunConfig::default();
        c.paths.model = Some(x.clone());
        d.paths.model = Some(y);
        d.paths.out_dir = Some(dir.path().to_path_buf());
        assert_eq!(c.hash(), d.hash());
        std::fs::write(&x, "{ }").unwrap();
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn pairs_parse() {
        let mut c = RunConfig::default();
        assert_eq!(c.pairs().unwrap()[0], ("education".to_string(), "gender".to_string()));
        c.eval.pairs = vec!["age".into()];
        assert!(c.pairs().is_err());
    }
}
