//! The single structured run-configuration document. One file describes
//! the cascade, the backends behind each tier, per-tier calibration
//! settings, dataset paths, and output locations, so every run is
//! reproducible from one artifact. Environment variables supply only
//! secrets (API keys).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use cascade_core::backends::{
    HttpBackend, HttpBackendConfig, ModelBackend, ScriptedBackend, ScriptedRule,
};
use cascade_core::pipeline::CascadeConfig;
use cascade_core::calibration::CalibrationConfig;

use crate::checks::SimulateConfig;
use crate::error::CliError;

/// Backend definition behind a tier id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// Deterministic rule table for simulations and tests.
    Scripted {
        #[serde(default)]
        rules: Vec<ScriptedRule>,
        #[serde(default = "default_answer")]
        default_answer: String,
        #[serde(default = "default_confidence")]
        default_confidence: f64,
    },
    /// OpenAI-compatible chat-completions service.
    Http(HttpBackendConfig),
}

fn default_answer() -> String {
    "None".to_string()
}

fn default_confidence() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
}

/// The run-configuration file. Relative paths resolve against the config
/// file's directory. `output_path` is a directory; each command writes its
/// own fixed file names inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade: Option<CascadeConfig>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub calibration: BTreeMap<String, CalibrationConfig>,
    #[serde(default)]
    pub datasets: DatasetPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_path: Option<PathBuf>,
    /// Start strategy-mode runs from the repository at `repo_path` instead
    /// of an empty one. Off by default so repeated runs are reproducible.
    #[serde(default)]
    pub load_repo: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfigFile {
    /// Parse and validate a config file. Referenced dataset paths must
    /// exist; outputs need not.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config: RunConfigFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        config.base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.validate()?;
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        for (name, path) in [
            ("calibration dataset", &self.datasets.calibration),
            ("test dataset", &self.datasets.test),
        ] {
            if let Some(p) = path {
                let resolved = self.resolve(p);
                if !resolved.exists() {
                    return Err(CliError::Validation(format!(
                        "{name} {} does not exist",
                        resolved.display()
                    )));
                }
            }
        }
        if let Some(cascade) = &self.cascade {
            for tier in &cascade.tiers {
                if !self.backends.contains_key(&tier.backend) {
                    return Err(CliError::Validation(format!(
                        "tier references backend '{}' but no such backend is defined",
                        tier.backend
                    )));
                }
            }
        }
        for id in self.calibration.keys() {
            if !self.backends.contains_key(id) {
                return Err(CliError::Validation(format!(
                    "calibration entry '{id}' has no matching backend"
                )));
            }
        }
        if self.load_repo {
            let repo = self.repo_path.as_ref().ok_or_else(|| {
                CliError::Validation("load_repo is set but repo_path is missing".into())
            })?;
            let resolved = self.resolve(repo);
            if !resolved.exists() {
                return Err(CliError::Validation(format!(
                    "load_repo is set but {} does not exist",
                    resolved.display()
                )));
            }
        }
        Ok(())
    }

    pub fn cascade(&self) -> Result<&CascadeConfig, CliError> {
        self.cascade
            .as_ref()
            .ok_or_else(|| CliError::Validation("config has no 'cascade' section".into()))
    }

    pub fn output_dir(&self) -> Result<PathBuf, CliError> {
        let path = self
            .output_path
            .as_ref()
            .ok_or_else(|| CliError::Validation("config has no 'output_path'".into()))?;
        Ok(self.resolve(path))
    }

    pub fn dataset(&self, which: DatasetRole) -> Result<PathBuf, CliError> {
        let (name, path) = match which {
            DatasetRole::Calibration => ("datasets.calibration", &self.datasets.calibration),
            DatasetRole::Test => ("datasets.test", &self.datasets.test),
        };
        path.as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| CliError::Validation(format!("config has no '{name}' path")))
    }

    /// Instantiate every configured backend.
    pub fn build_backends(
        &self,
    ) -> Result<BTreeMap<String, Arc<dyn ModelBackend>>, CliError> {
        let mut registry: BTreeMap<String, Arc<dyn ModelBackend>> = BTreeMap::new();
        for (id, spec) in &self.backends {
            let backend: Arc<dyn ModelBackend> = match spec {
                BackendSpec::Scripted {
                    rules,
                    default_answer,
                    default_confidence,
                } => Arc::new(ScriptedBackend::new(
                    rules.clone(),
                    default_answer.clone(),
                    *default_confidence,
                )),
                BackendSpec::Http(http) => Arc::new(
                    HttpBackend::new(http.clone()).map_err(CliError::from_backend)?,
                ),
            };
            registry.insert(id.clone(), backend);
        }
        Ok(registry)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DatasetRole {
    Calibration,
    Test,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("config.json");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    #[test]
    fn missing_dataset_path_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            r#"{"datasets": {"calibration": "missing.jsonl"}}"#,
        );
        let err = RunConfigFile::load(&path).unwrap_err();
        assert!(err.to_string().contains("does not exist"), "{err}");
    }

    #[test]
    fn tier_backend_references_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            r#"{
                "cascade": {
                    "tiers": [
                        {"backend": "ghost", "profile": {"perf": 0.5, "cost": 1.0}}
                    ]
                },
                "backends": {}
            }"#,
        );
        let err = RunConfigFile::load(&path).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), r#"{"no_such_field": 1}"#);
        assert!(RunConfigFile::load(&path).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cal.jsonl"), "x").unwrap();
        let path = write_config(
            dir.path(),
            r#"{"datasets": {"calibration": "cal.jsonl"}, "output_path": "out"}"#,
        );
        let config = RunConfigFile::load(&path).unwrap();
        assert_eq!(
            config.dataset(DatasetRole::Calibration).unwrap(),
            dir.path().join("cal.jsonl")
        );
        assert_eq!(config.output_dir().unwrap(), dir.path().join("out"));
    }
}
