//! TOML run configuration. Every field has a default, so an empty file (or
//! no file) is a valid config; credentials are never stored here — only the
//! NAMES of environment variables that hold them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusFormat;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse {path}: {source}")]
    Toml {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("unknown dataset {0:?}; configure it under [datasets.{0}]")]
    UnknownDataset(String),
    #[error("role {role}: {message}")]
    BadProvider { role: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Chat-provider backend selector for one role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatKind {
    /// OpenAI-compatible HTTP endpoint.
    Http,
    /// Scripted responses from a JSONL file; for tests and dry runs.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatRoleConfig {
    #[serde(default = "default_chat_kind")]
    pub kind: ChatKind,
    /// Model id sent with every request.
    pub model: String,
    /// Base URL of the OpenAI-compatible API (http kind).
    #[serde(default)]
    pub endpoint: String,
    /// NAME of the environment variable holding the API key (http kind).
    #[serde(default)]
    pub api_key_env: String,
    /// Script path (mock kind).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

fn default_chat_kind() -> ChatKind {
    ChatKind::Http
}

impl ChatRoleConfig {
    fn unconfigured(model: &str) -> Self {
        ChatRoleConfig {
            kind: ChatKind::Http,
            model: model.to_string(),
            endpoint: String::new(),
            api_key_env: String::new(),
            script: None,
        }
    }

    /// Hard validation, run only when the role is actually needed.
    pub fn validate(&self, role: &str) -> Result<(), ConfigError> {
        match self.kind {
            ChatKind::Http => {
                if self.endpoint.is_empty() {
                    return Err(ConfigError::BadProvider {
                        role: role.to_string(),
                        message: "http provider needs an endpoint".into(),
                    });
                }
                if self.api_key_env.is_empty() {
                    return Err(ConfigError::BadProvider {
                        role: role.to_string(),
                        message: "http provider needs api_key_env (the VARIABLE NAME, not the key)"
                            .into(),
                    });
                }
            }
            ChatKind::Mock => {
                if self.script.is_none() {
                    return Err(ConfigError::BadProvider {
                        role: role.to_string(),
                        message: "mock provider needs a script path".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    /// OpenAI-compatible /embeddings endpoint.
    Http,
    /// Deterministic local hash embedding; no network, fixed quality.
    Local,
    /// Fixed vectors from a JSONL file.
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "default_embedding_kind")]
    pub kind: EmbeddingKind,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: String,
    /// Vector file (mock kind).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vectors: Option<PathBuf>,
    /// Dimension (local kind).
    #[serde(default = "default_local_dim")]
    pub dim: usize,
}

fn default_embedding_kind() -> EmbeddingKind {
    EmbeddingKind::Local
}

fn default_local_dim() -> usize {
    256
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            kind: EmbeddingKind::Local,
            model: String::new(),
            endpoint: String::new(),
            api_key_env: String::new(),
            vectors: None,
            dim: default_local_dim(),
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            EmbeddingKind::Http => {
                if self.endpoint.is_empty() || self.api_key_env.is_empty() || self.model.is_empty()
                {
                    return Err(ConfigError::BadProvider {
                        role: "embedding".into(),
                        message: "http embedding needs endpoint, api_key_env, and model".into(),
                    });
                }
            }
            EmbeddingKind::Mock => {
                if self.vectors.is_none() {
                    return Err(ConfigError::BadProvider {
                        role: "embedding".into(),
                        message: "mock embedding needs a vectors file".into(),
                    });
                }
            }
            EmbeddingKind::Local => {
                if self.dim == 0 {
                    return Err(ConfigError::BadProvider {
                        role: "embedding".into(),
                        message: "local embedding dim must be at least 1".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolesConfig {
    pub launderer: ChatRoleConfig,
    pub target: ChatRoleConfig,
    pub judge: ChatRoleConfig,
    pub criteria: ChatRoleConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for RolesConfig {
    fn default() -> Self {
        RolesConfig {
            launderer: ChatRoleConfig::unconfigured("launderer-model"),
            target: ChatRoleConfig::unconfigured("target-model"),
            judge: ChatRoleConfig::unconfigured("judge-model"),
            criteria: ChatRoleConfig::unconfigured("criteria-model"),
            embedding: EmbeddingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub format: CorpusFormat,
    /// Column (csv) or key (jsonl) holding the text; ignored for lines.
    #[serde(default)]
    pub field: String,
}

fn default_datasets() -> BTreeMap<String, DatasetConfig> {
    BTreeMap::from([
        (
            "advbench".to_string(),
            DatasetConfig {
                path: PathBuf::from("data/advbench.csv"),
                format: CorpusFormat::Csv,
                field: "goal".to_string(),
            },
        ),
        (
            "harmbench".to_string(),
            DatasetConfig {
                path: PathBuf::from("data/harmbench.csv"),
                format: CorpusFormat::Csv,
                field: "Behavior".to_string(),
            },
        ),
        (
            "gsm8k".to_string(),
            DatasetConfig {
                path: PathBuf::from("data/gsm8k.jsonl"),
                format: CorpusFormat::Jsonl,
                field: "question".to_string(),
            },
        ),
    ])
}

/// Full run configuration. `#[serde(default)]` on every knob keeps old
/// config files working as new knobs appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub seed: u64,
    /// Similarity threshold used for the dedup partition.
    pub dedup_threshold: f64,
    /// Sweep bounds, inclusive, in integer percent (70 => 0.70). Stepping in
    /// integers sidesteps float accumulation.
    pub sweep_start_percent: u32,
    pub sweep_end_percent: u32,
    /// Top-k cutoff for n-gram rankings.
    pub top_k: usize,
    pub bootstrap_resamples: usize,
    pub confidence_level: f64,
    pub max_iterations: u32,
    /// Optional early-stop ASR, in percent.
    pub target_asr_percent: Option<f64>,
    /// Response-cache directory; disabled when empty.
    pub cache_dir: Option<PathBuf>,
    pub roles: RolesConfig,
    pub datasets: BTreeMap<String, DatasetConfig>,
    /// Laundering demonstrations (JSONL of {original, revision}).
    pub demos_path: Option<PathBuf>,
    /// Criterion demonstrations (JSONL of {original, criterion}).
    pub criterion_demos_path: Option<PathBuf>,
    /// Cue lexicon (TSV of phrase<TAB>category) for n-gram tagging.
    pub cue_lexicon_path: Option<PathBuf>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 42,
            dedup_threshold: 0.9,
            sweep_start_percent: 70,
            sweep_end_percent: 99,
            top_k: 40,
            bootstrap_resamples: 10_000,
            confidence_level: 0.95,
            max_iterations: 5,
            target_asr_percent: None,
            cache_dir: None,
            roles: RolesConfig::default(),
            datasets: default_datasets(),
            demos_path: None,
            criterion_demos_path: None,
            cue_lexicon_path: None,
        }
    }
}

impl AppConfig {
    /// Load from TOML; a missing `path` (None) yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<AppConfig, ConfigError> {
        let Some(path) = path else {
            return Ok(AppConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: AppConfig = toml::from_str(&text).map_err(|source| ConfigError::Toml {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        config.validate_basics()?;
        Ok(config)
    }

    fn validate_basics(&self) -> Result<(), ConfigError> {
        if !(self.dedup_threshold > -1.0 && self.dedup_threshold <= 1.0) {
            return Err(ConfigError::Invalid(format!(
                "dedup_threshold must be in (-1, 1], got {}",
                self.dedup_threshold
            )));
        }
        if self.sweep_start_percent > self.sweep_end_percent {
            return Err(ConfigError::Invalid(format!(
                "sweep range is empty: {}..={}",
                self.sweep_start_percent, self.sweep_end_percent
            )));
        }
        if self.sweep_end_percent > 100 {
            return Err(ConfigError::Invalid(format!(
                "sweep_end_percent must be at most 100, got {}",
                self.sweep_end_percent
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "confidence_level must be in (0, 1), got {}",
                self.confidence_level
            )));
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Result<&DatasetConfig, ConfigError> {
        self.datasets
            .get(name)
            .ok_or_else(|| ConfigError::UnknownDataset(name.to_string()))
    }

    /// Sweep thresholds as fractions, ascending.
    pub fn sweep_thresholds(&self) -> Vec<f64> {
        (self.sweep_start_percent..=self.sweep_end_percent)
            .map(|p| f64::from(p) / 100.0)
            .collect()
    }

    /// Digest of the effective configuration, for the run manifest.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_spec_faithful() {
        let config = AppConfig::default();
        assert_eq!(config.seed, 42);
        assert_eq!(config.dedup_threshold, 0.9);
        assert_eq!(config.top_k, 40);
        assert_eq!(config.bootstrap_resamples, 10_000);
        assert_eq!(config.confidence_level, 0.95);
        let thresholds = config.sweep_thresholds();
        assert_eq!(thresholds.len(), 30);
        assert_eq!(thresholds[0], 0.70);
        assert_eq!(*thresholds.last().unwrap(), 0.99);
        assert!(thresholds.windows(2).all(|w| w[0] < w[1]));

        let advbench = config.dataset("advbench").unwrap();
        assert_eq!(advbench.format, CorpusFormat::Csv);
        assert_eq!(advbench.field, "goal");
        let harmbench = config.dataset("harmbench").unwrap();
        assert_eq!(harmbench.field, "Behavior");
        let gsm8k = config.dataset("gsm8k").unwrap();
        assert_eq!(gsm8k.format, CorpusFormat::Jsonl);
        assert_eq!(gsm8k.field, "question");
        assert!(config.dataset("unknown").is_err());
    }

    #[test]
    fn empty_toml_equals_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "").unwrap();
        let loaded = AppConfig::load(Some(&path)).unwrap();
        assert_eq!(loaded, AppConfig::default());
        assert_eq!(AppConfig::load(None).unwrap(), AppConfig::default());
    }

    #[test]
    fn partial_toml_overrides_only_named_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            r#"
seed = 7
top_k = 10

[roles.target]
kind = "http"
model = "target-x"
endpoint = "https://api.example.test/v1"
api_key_env = "TARGET_KEY"

[datasets.custom]
path = "x.txt"
format = "lines"
"#,
        )
        .unwrap();
        let config = AppConfig::load(Some(&path)).unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.top_k, 10);
        assert_eq!(config.dedup_threshold, 0.9, "untouched fields keep defaults");
        assert_eq!(config.roles.target.model, "target-x");
        config.roles.target.validate("target").unwrap();
        // Named datasets REPLACE the default map (standard TOML semantics);
        // the defaults only apply when the section is absent.
        assert!(config.dataset("custom").is_ok());
        assert!(config.dataset("advbench").is_err());
    }

    #[test]
    fn unconfigured_http_roles_fail_validation_lazily() {
        let config = AppConfig::default();
        let err = config.roles.launderer.validate("launderer").unwrap_err();
        assert!(matches!(err, ConfigError::BadProvider { .. }));
        // Mock without a script is also rejected.
        let mock = ChatRoleConfig {
            kind: ChatKind::Mock,
            model: "m".into(),
            endpoint: String::new(),
            api_key_env: String::new(),
            script: None,
        };
        assert!(mock.validate("judge").is_err());
        // Local embedding is fine out of the box.
        config.roles.embedding.validate().unwrap();
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "sweep_start_percent = 90\nsweep_end_percent = 80\n").unwrap();
        assert!(AppConfig::load(Some(&path)).is_err());
        std::fs::write(&path, "confidence_level = 1.0\n").unwrap();
        assert!(AppConfig::load(Some(&path)).is_err());
        std::fs::write(&path, "not_a_real_knob = 1\n").unwrap();
        assert!(AppConfig::load(Some(&path)).is_err(), "unknown fields are rejected");
    }

    #[test]
    fn digest_tracks_content() {
        let a = AppConfig::default();
        let mut b = AppConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.seed = 43;
        assert_ne!(a.digest(), b.digest());
    }
}
