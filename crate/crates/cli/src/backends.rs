//! Builds concrete backends, classifiers, and judges from config
//! entries.

use std::sync::Arc;

use coordscope_core::concern::{ConcernClassifier, ConcernTaxonomy, KeywordClassifier, LlmClassifier};
use coordscope_core::gateway::{
    ChatBackend, DiskCache, FailingBackend, GatewayConfig, HttpBackendConfig, HttpChatBackend,
    LlmGateway, ScriptedBackend,
};
use coordscope_core::validation::{
    ChatJudge, EntailmentJudge, EquivalenceJudge, HttpEntailmentScorer, StringEqualityJudge,
    DEFAULT_ENTAILMENT_THRESHOLD,
};

use crate::config::{BackendConfig, BackendKind, RunConfig};
use crate::CliError;

pub fn build_gateway(config: &RunConfig, cache_dir_override: Option<&std::path::Path>) -> Result<Arc<LlmGateway>, CliError> {
    let dir = cache_dir_override.map(|p| p.to_path_buf()).or_else(|| config.cache.dir.clone());
    let cache = match dir {
        Some(dir) => Some(DiskCache::open(&dir).map_err(|e| {
            CliError::Io(format!("cannot open cache dir `{}`: {e}", dir.display()))
        })?),
        None => None,
    };
    Ok(Arc::new(LlmGateway::new(
        cache,
        GatewayConfig {
            max_in_flight: config.cache.max_in_flight,
            max_attempts: config.cache.retry_attempts,
            retry_base: std::time::Duration::from_millis(config.cache.retry_base_ms),
        },
    )))
}

fn backend_entry<'c>(config: &'c RunConfig, name: &str) -> Result<&'c BackendConfig, CliError> {
    config.backends.get(name).ok_or_else(|| {
        CliError::Config(format!("no `[backends.{name}]` entry in the run config"))
    })
}

/// Resolves the backend entry for a role, honoring a `--backend`
/// override by name.
pub fn resolve_backend<'c>(
    config: &'c RunConfig,
    role: &str,
    override_name: Option<&str>,
) -> Result<(String, &'c BackendConfig), CliError> {
    let name = override_name.unwrap_or(role);
    Ok((name.to_owned(), backend_entry(config, name)?))
}

pub fn model_id(entry: &BackendConfig) -> String {
    entry.model.clone().unwrap_or_else(|| "default".to_owned())
}

pub fn build_chat_backend(
    name: &str,
    entry: &BackendConfig,
) -> Result<Arc<dyn ChatBackend>, CliError> {
    match entry.kind {
        BackendKind::Mock => {
            let script = entry.script.as_ref().ok_or_else(|| {
                CliError::Config(format!("mock backend `{name}` needs a script file"))
            })?;
            let backend = ScriptedBackend::from_script_file(name, script).map_err(|e| {
                CliError::Config(format!("backend `{name}` script `{}`: {e}", script.display()))
            })?;
            Ok(Arc::new(backend))
        }
        BackendKind::Http => {
            let backend = HttpChatBackend::new(HttpBackendConfig {
                id: name.to_owned(),
                endpoint: entry.endpoint.clone().expect("validated"),
                model_id: model_id(entry),
                credential_env: entry.credential_env.clone(),
                timeout_secs: 60,
            })
            .map_err(|e| CliError::Backend(format!("backend `{name}`: {e}")))?;
            Ok(Arc::new(backend))
        }
        BackendKind::Failing => Ok(Arc::new(FailingBackend::new(name))),
        other => Err(CliError::Config(format!(
            "backend `{name}` kind {other:?} is not a chat backend"
        ))),
    }
}

pub fn build_classifier(
    name: &str,
    entry: &BackendConfig,
    taxonomy: &ConcernTaxonomy,
    gateway: Arc<LlmGateway>,
) -> Result<Box<dyn ConcernClassifier>, CliError> {
    match entry.kind {
        BackendKind::Keyword => Ok(Box::new(KeywordClassifier::new(taxonomy.clone()))),
        BackendKind::Mock | BackendKind::Http | BackendKind::Failing => {
            let backend = build_chat_backend(name, entry)?;
            Ok(Box::new(LlmClassifier::new(
                backend,
                gateway,
                taxonomy.clone(),
                model_id(entry),
            )))
        }
        other => Err(CliError::Config(format!(
            "backend `{name}` kind {other:?} cannot classify concerns"
        ))),
    }
}

pub fn build_judge(
    name: &str,
    entry: &BackendConfig,
    gateway: Arc<LlmGateway>,
) -> Result<Box<dyn EquivalenceJudge>, CliError> {
    match entry.kind {
        BackendKind::StringEquality => Ok(Box::new(StringEqualityJudge)),
        BackendKind::EntailmentHttp => {
            let scorer = HttpEntailmentScorer::new(
                name,
                entry.endpoint.clone().expect("validated"),
            );
            Ok(Box::new(EntailmentJudge::new(
                scorer,
                entry.threshold.unwrap_or(DEFAULT_ENTAILMENT_THRESHOLD),
            )))
        }
        BackendKind::Mock | BackendKind::Http | BackendKind::Failing => {
            let backend = build_chat_backend(name, entry)?;
            Ok(Box::new(ChatJudge {
                backend,
                gateway,
                model_id: model_id(entry),
            }))
        }
        BackendKind::Keyword => Err(CliError::Config(format!(
            "backend `{name}` kind keyword cannot judge equivalence"
        ))),
    }
}
