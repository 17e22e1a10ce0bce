//! Run configuration: one TOML file wiring corpus, taxonomy, windows,
//! thresholds, seeds, backends, and output layout.
//!
//! Relative paths inside the file resolve against the file's directory,
//! so a config ships alongside its fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use coordscope_core::coordination::MatchRule;
use coordscope_core::ingest::SchemaConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub fields: SchemaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRef {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub min_hashtags: usize,
    pub min_campaign_accounts: usize,
    pub sample_k: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_hashtags: coordscope_core::coordination::MIN_FINGERPRINT_HASHTAGS,
            min_campaign_accounts: coordscope_core::coordination::DEFAULT_MIN_CAMPAIGN_ACCOUNTS,
            sample_k: coordscope_core::annotate::DEFAULT_SLICE_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub master: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { master: 17 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Reposts mechanically copy hashtags, so they are excluded unless
    /// explicitly restored. Logged per run.
    pub include_reposts: bool,
    pub match_rule: MatchRule,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            include_reposts: false,
            match_rule: MatchRule::FullSequence,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    /// Concerns to slice on; empty means one unfiltered pass.
    pub concerns: Vec<String>,
    /// Campaigns to annotate; empty means all retained campaigns.
    pub campaign_ids: Vec<u32>,
    /// Closed-set goal categories; absent asks open-vocabulary.
    pub goal_categories: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub dir: Option<PathBuf>,
    pub max_in_flight: usize,
    pub retry_attempts: u32,
    pub retry_base_ms: u64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            dir: None,
            max_in_flight: 4,
            retry_attempts: 3,
            retry_base_ms: 250,
        }
    }
}

/// One backend entry. `kind` selects the implementation; the other
/// fields apply where meaningful.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Script file for `mock`.
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Endpoint URL for `http` / `entailment_http`.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Model identifier passed to the backend.
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the credential for `http`.
    #[serde(default)]
    pub credential_env: Option<String>,
    /// Verdict threshold for `entailment_http`.
    #[serde(default)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Scripted mock (deterministic, offline).
    #[default]
    Mock,
    /// Keyword fallback classifier (concern role only).
    Keyword,
    /// OpenAI-compatible chat-completions endpoint.
    Http,
    /// Always fails; the offline network stub.
    Failing,
    /// Judge: equivalent iff strings match after trim + casefold.
    StringEquality,
    /// Judge: HTTP NLI scorer with a verdict threshold.
    EntailmentHttp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusConfig,
    pub taxonomy: PathRef,
    #[serde(default)]
    pub windows: Option<PathRef>,
    #[serde(default)]
    pub fallacies: Option<PathRef>,
    #[serde(default)]
    pub ground_truth: Option<PathRef>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub annotation: AnnotationConfig,
    #[serde(default)]
    pub cache: CacheConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendConfig>,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parses a TOML file and resolves relative paths against its
    /// directory. Referenced files must exist; thresholds must be >= 1.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&raw).map_err(|e| {
            CliError::Config(format!("cannot parse config `{}`: {e}", path.display()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_relative(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.corpus.path);
        resolve(&mut self.taxonomy.path);
        if let Some(w) = &mut self.windows {
            resolve(&mut w.path);
        }
        if let Some(f) = &mut self.fallacies {
            resolve(&mut f.path);
        }
        if let Some(g) = &mut self.ground_truth {
            resolve(&mut g.path);
        }
        if let Some(d) = &mut self.cache.dir {
            resolve(d);
        }
        for backend in self.backends.values_mut() {
            if let Some(script) = &mut backend.script {
                resolve(script);
            }
        }
        resolve(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let must_exist = |label: &str, p: &Path| -> Result<(), CliError> {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "{label} file `{}` does not exist",
                    p.display()
                )))
            }
        };
        must_exist("corpus", &self.corpus.path)?;
        must_exist("taxonomy", &self.taxonomy.path)?;
        if let Some(w) = &self.windows {
            must_exist("windows", &w.path)?;
        }
        if let Some(f) = &self.fallacies {
            must_exist("fallacies", &f.path)?;
        }
        if let Some(g) = &self.ground_truth {
            must_exist("ground truth", &g.path)?;
        }
        for (name, backend) in &self.backends {
            if let Some(script) = &backend.script {
                must_exist(&format!("backend `{name}` script"), script)?;
            }
            if backend.kind == BackendKind::Http && backend.endpoint.is_none() {
                return Err(CliError::Config(format!(
                    "backend `{name}` is http but has no endpoint"
                )));
            }
            if backend.kind == BackendKind::EntailmentHttp && backend.endpoint.is_none() {
                return Err(CliError::Config(format!(
                    "backend `{name}` is entailment_http but has no endpoint"
                )));
            }
        }
        for (label, value) in [
            ("thresholds.min_hashtags", self.thresholds.min_hashtags),
            (
                "thresholds.min_campaign_accounts",
                self.thresholds.min_campaign_accounts,
            ),
            ("thresholds.sample_k", self.thresholds.sample_k),
        ] {
            if value < 1 {
                return Err(CliError::Config(format!("{label} must be >= 1, got {value}")));
            }
        }
        Ok(())
    }
}
