//! Parsing of backend selector strings such as `mock:evidence` or `remote`.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::mock::{ConstantBackend, EvidenceAveraging, EvidenceFollowing, MockBackend, MockScript};
use super::remote::{RemoteBackend, RemoteConfig};
use super::{Backend, GatewayError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum BackendSelector {
    Evidence,
    Average,
    Constant(f64),
    /// A bundled fixture script name or a path to a script file.
    Script(String),
    Remote,
}

impl FromStr for BackendSelector {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "remote" {
            return Ok(BackendSelector::Remote);
        }
        let rest = s.strip_prefix("mock:").ok_or_else(|| {
            GatewayError::Config(format!("unknown backend `{s}`; expected `remote` or `mock:<name>`"))
        })?;
        Ok(match rest {
            "evidence" => BackendSelector::Evidence,
            "average" => BackendSelector::Average,
            _ => match rest.strip_prefix("constant:") {
                Some(p) => BackendSelector::Constant(
                    p.parse()
                        .map_err(|_| GatewayError::Config(format!("bad constant probability `{p}`")))?,
                ),
                None if rest.is_empty() => {
                    return Err(GatewayError::Config("empty mock name".into()))
                }
                None => BackendSelector::Script(rest.to_string()),
            },
        })
    }
}

/// Builds the backend named by `selector`. Script names resolve first to
/// bundled fixtures, then to `<fixtures_dir>/<name>.toml`, then to a path.
pub fn backend_from_selector(
    selector: &str,
    remote: &RemoteConfig,
    fixtures_dir: Option<&Path>,
) -> Result<Arc<dyn Backend>> {
    Ok(match selector.parse::<BackendSelector>()? {
        BackendSelector::Evidence => Arc::new(EvidenceFollowing),
        BackendSelector::Average => Arc::new(EvidenceAveraging),
        BackendSelector::Constant(p) => Arc::new(ConstantBackend::new(p)?),
        BackendSelector::Remote => Arc::new(RemoteBackend::from_env(remote.clone())?),
        BackendSelector::Script(name) => {
            let script = if let Some(text) = crate::fixtures::mock_script(&name) {
                let mut s = MockScript::from_toml_str(text)?;
                s.name = name.clone();
                s
            } else {
                let in_dir = fixtures_dir.map(|d| d.join(format!("{name}.toml")));
                let path = match in_dir {
                    Some(p) if p.exists() => p,
                    _ => PathBuf::from(&name),
                };
                if !path.exists() {
                    return Err(GatewayError::Config(format!("no mock script named `{name}`")));
                }
                MockScript::load(&path)?
            };
            Arc::new(MockBackend::new(script)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selectors_parse() {
        assert_eq!("mock:evidence".parse::<BackendSelector>().unwrap(), BackendSelector::Evidence);
        assert_eq!(
            "mock:constant:0.8".parse::<BackendSelector>().unwrap(),
            BackendSelector::Constant(0.8)
        );
        assert_eq!(
            "mock:roller_coaster".parse::<BackendSelector>().unwrap(),
            BackendSelector::Script("roller_coaster".into())
        );
        assert_eq!("remote".parse::<BackendSelector>().unwrap(), BackendSelector::Remote);
        assert!("gpt".parse::<BackendSelector>().is_err());
        assert!("mock:constant:x".parse::<BackendSelector>().is_err());
    }

    #[test]
    fn bundled_scripts_resolve() {
        let b = backend_from_selector("mock:roller_coaster", &RemoteConfig::default(), None).unwrap();
        assert_eq!(b.id(), "mock:roller_coaster");
        assert!(backend_from_selector("mock:nope", &RemoteConfig::default(), None).is_err());
    }

    #[test]
    fn script_path_resolves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mine.toml");
        std::fs::write(&path, "default_response = \"12.5%\"\n").unwrap();
        let b = backend_from_selector("mock:mine", &RemoteConfig::default(), Some(dir.path())).unwrap();
        assert_eq!(b.id(), "mock:mine");
        let b = backend_from_selector(&format!("mock:{}", path.display()), &RemoteConfig::default(), None).unwrap();
        assert_eq!(b.id(), "mock:mine");
    }
}
