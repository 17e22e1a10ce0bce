//! Uniform access to chat-completion backends.
//!
//! Every pipeline stage that talks to a model goes through
//! [`LlmGateway::complete`], which adds content-addressed disk caching,
//! bounded retries with exponential backoff, and a cap on in-flight
//! requests. With a warm cache a rerun issues zero backend calls, so
//! analysis reruns are free and bitwise deterministic.

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// One completion request. `temperature` defaults to 0 so identical
/// requests are reproducible; `request_tag` labels the pipeline stage
/// (e.g. "concern", "goal") for logs and mock scripting only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub backend_id: String,
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_tag: String,
}

impl CompletionRequest {
    pub fn new(
        backend_id: impl Into<String>,
        model_id: impl Into<String>,
        prompt: impl Into<String>,
        request_tag: impl Into<String>,
    ) -> Self {
        CompletionRequest {
            backend_id: backend_id.into(),
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_output_tokens: 1024,
            request_tag: request_tag.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionResponse {
    pub text: String,
    pub cache_hit: bool,
    pub latency: Duration,
    /// Backend attempts made; a cache read counts as one attempt.
    pub attempt_count: u32,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Worth retrying: timeouts, rate limits, 5xx.
    #[error("transient backend failure: {0}")]
    Transient(String),
    /// Not worth retrying.
    #[error("backend failure: {0}")]
    Fatal(String),
    /// Credential problem; never retried.
    #[error("authentication failed: {0}")]
    Auth(String),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("prompt must be non-empty")]
    EmptyPrompt,
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("backend `{backend_id}` failed after {attempts} attempt(s): {source}")]
    Exhausted {
        backend_id: String,
        attempts: u32,
        source: BackendError,
    },
    #[error("cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

/// A chat-completion backend. Implementations must be safe to call from
/// multiple worker threads.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

/// Stable cache key: SHA-256 over the response-determining fields
/// (backend, model, prompt, temperature, max tokens). `request_tag` is
/// excluded so the same prompt issued from different stages shares one
/// cache entry.
pub fn cache_key(request: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    for part in [
        "v1",
        request.backend_id.as_str(),
        request.model_id.as_str(),
        request.prompt.as_str(),
    ] {
        hasher.update(part.as_bytes());
        hasher.update([0u8]);
    }
    hasher.update(format!("{}", request.temperature).as_bytes());
    hasher.update([0u8]);
    hasher.update(format!("{}", request.max_output_tokens).as_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Hex SHA-256 of a prompt, used by script files to key mock responses.
pub fn prompt_digest(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    backend_id: String,
    model_id: String,
    request_tag: String,
    temperature: f64,
    max_output_tokens: u32,
    prompt: String,
    text: String,
}

/// One file per key under the cache directory. Writes go through a
/// temp file + rename so concurrent writers never expose a torn entry.
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(DiskCache { dir })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> std::io::Result<Option<String>> {
        match std::fs::read_to_string(self.path(key)) {
            Ok(raw) => match serde_json::from_str::<CacheEntry>(&raw) {
                Ok(entry) => Ok(Some(entry.text)),
                // A torn or foreign file is treated as a miss and rewritten.
                Err(_) => Ok(None),
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, key: &str, request: &CompletionRequest, text: &str) -> std::io::Result<()> {
        let entry = CacheEntry {
            backend_id: request.backend_id.clone(),
            model_id: request.model_id.clone(),
            request_tag: request.request_tag.clone(),
            temperature: request.temperature,
            max_output_tokens: request.max_output_tokens,
            prompt: request.prompt.clone(),
            text: text.to_owned(),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, &entry)?;
        tmp.write_all(b"\n")?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

/// Counting semaphore; caps concurrent backend calls.
struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphorePermit<'_> {
        let mut available = self.available.lock().expect("semaphore poisoned");
        while *available == 0 {
            available = self.cv.wait(available).expect("semaphore poisoned");
        }
        *available -= 1;
        SemaphorePermit { semaphore: self }
    }
}

struct SemaphorePermit<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        let mut available = self.semaphore.available.lock().expect("semaphore poisoned");
        *available += 1;
        self.semaphore.cv.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub retry_base: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            max_in_flight: 4,
            max_attempts: 3,
            retry_base: Duration::from_millis(250),
        }
    }
}

pub struct LlmGateway {
    cache: Option<DiskCache>,
    config: GatewayConfig,
    limiter: Semaphore,
}

impl LlmGateway {
    pub fn new(cache: Option<DiskCache>, config: GatewayConfig) -> Self {
        let limiter = Semaphore::new(config.max_in_flight);
        LlmGateway { cache, config, limiter }
    }

    /// Gateway without a cache; every call reaches the backend.
    pub fn uncached() -> Self {
        LlmGateway::new(None, GatewayConfig::default())
    }

    pub fn complete(
        &self,
        backend: &dyn ChatBackend,
        request: &CompletionRequest,
    ) -> Result<CompletionResponse, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidTemperature(request.temperature));
        }

        let start = Instant::now();
        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&key)? {
                return Ok(CompletionResponse {
                    text,
                    cache_hit: true,
                    latency: start.elapsed(),
                    attempt_count: 1,
                });
            }
        }

        let _permit = self.limiter.acquire();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match backend.complete(request) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&key, request, &text)?;
                    }
                    return Ok(CompletionResponse {
                        text,
                        cache_hit: false,
                        latency: start.elapsed(),
                        attempt_count: attempts,
                    });
                }
                Err(BackendError::Transient(msg)) if attempts < self.config.max_attempts => {
                    let backoff = self.config.retry_base * 2u32.saturating_pow(attempts - 1);
                    log::warn!(
                        "transient failure from `{}` (attempt {attempts}): {msg}; retrying in {backoff:?}",
                        request.backend_id
                    );
                    std::thread::sleep(backoff);
                }
                Err(source) => {
                    return Err(GatewayError::Exhausted {
                        backend_id: request.backend_id.clone(),
                        attempts,
                        source,
                    })
                }
            }
        }
    }
}

/// One scripting rule for [`ScriptedBackend`]. All present conditions
/// must hold; rules are tried in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Matches `prompt_digest(prompt)`.
    #[serde(default)]
    pub prompt_digest: Option<String>,
    /// Matches the request tag exactly, or a `tag:` prefix when the tag
    /// carries a suffix (e.g. `bend:Excite`).
    #[serde(default)]
    pub tag: Option<String>,
    /// Substring of the prompt.
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, request: &CompletionRequest) -> bool {
        if let Some(digest) = &self.prompt_digest {
            if *digest != prompt_digest(&request.prompt) {
                return false;
            }
        }
        if let Some(tag) = &self.tag {
            let exact = request.request_tag == *tag;
            let prefixed = request
                .request_tag
                .strip_prefix(tag.as_str())
                .is_some_and(|rest| rest.starts_with(':'));
            if !exact && !prefixed {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            if !request.prompt.contains(needle.as_str()) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BackendScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default_response: Option<String>,
}

/// Deterministic mock backend driven by a script.
pub struct ScriptedBackend {
    id: String,
    script: BackendScript,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>, script: BackendScript) -> Self {
        ScriptedBackend {
            id: id.into(),
            script,
            calls: AtomicU64::new(0),
        }
    }

    pub fn from_script_file(id: impl Into<String>, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let script: BackendScript = serde_json::from_str(&raw)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(ScriptedBackend::new(id, script))
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        for rule in &self.script.rules {
            if rule.matches(request) {
                return Ok(rule.response.clone());
            }
        }
        match &self.script.default_response {
            Some(text) => Ok(text.clone()),
            None => Err(BackendError::Fatal(format!(
                "no scripted response for tag `{}`",
                request.request_tag
            ))),
        }
    }
}

/// Mock backend that replays a fixed queue of outcomes; used to exercise
/// retry behavior.
pub struct SequenceBackend {
    id: String,
    outcomes: Mutex<VecDeque<Result<String, BackendError>>>,
}

impl SequenceBackend {
    pub fn new(id: impl Into<String>, outcomes: Vec<Result<String, BackendError>>) -> Self {
        SequenceBackend {
            id: id.into(),
            outcomes: Mutex::new(outcomes.into()),
        }
    }
}

impl ChatBackend for SequenceBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, _request: &CompletionRequest) -> Result<String, BackendError> {
        self.outcomes
            .lock()
            .expect("outcomes poisoned")
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Fatal("sequence exhausted".into())))
    }
}

/// Wrapper that counts calls and tracks the maximum number of calls in
/// flight at once; the pipeline's cache and concurrency contracts are
/// asserted through it.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
    in_flight: AtomicI64,
    max_in_flight_seen: AtomicI64,
    pub delay: Option<Duration>,
}

impl<B: ChatBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            calls: AtomicU64::new(0),
            in_flight: AtomicI64::new(0),
            max_in_flight_seen: AtomicI64::new(0),
            delay: None,
        }
    }

    pub fn with_delay(inner: B, delay: Duration) -> Self {
        CountingBackend {
            delay: Some(delay),
            ..CountingBackend::new(inner)
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight_seen(&self) -> i64 {
        self.max_in_flight_seen.load(Ordering::SeqCst)
    }
}

impl<B: ChatBackend> ChatBackend for CountingBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight_seen.fetch_max(current, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        let result = self.inner.complete(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}

/// Network stub: every call fails. Configured as the backend wherever a
/// run must be provably offline.
pub struct FailingBackend {
    id: String,
}

impl FailingBackend {
    pub fn new(id: impl Into<String>) -> Self {
        FailingBackend { id: id.into() }
    }
}

impl ChatBackend for FailingBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        Err(BackendError::Fatal(format!(
            "network access disabled (request tag `{}`)",
            request.request_tag
        )))
    }
}

/// Set this environment variable to make every HTTP backend call fail;
/// hermetic test runs use it to prove nothing reaches the network.
pub const NO_NETWORK_ENV: &str = "COORDSCOPE_NO_NETWORK";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub id: String,
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    pub model_id: String,
    /// Name of the environment variable holding the bearer credential.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

/// Chat backend speaking the OpenAI-compatible chat-completions wire
/// format: request `{model, messages, temperature, max_tokens}`,
/// response `choices[0].message.content`.
pub struct HttpChatBackend {
    config: HttpBackendConfig,
    credential: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let credential = match &config.credential_env {
            Some(var) => match std::env::var(var) {
                Ok(value) if !value.is_empty() => Some(value),
                _ => {
                    return Err(BackendError::Auth(format!(
                        "credential environment variable `{var}` is not set"
                    )))
                }
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(HttpChatBackend {
            config,
            credential,
            client,
        })
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        if std::env::var(NO_NETWORK_ENV).is_ok() {
            return Err(BackendError::Fatal(format!(
                "network disabled by {NO_NETWORK_ENV}"
            )));
        }
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let mut http = self.client.post(&self.config.endpoint).json(&body);
        if let Some(credential) = &self.credential {
            http = http.bearer_auth(credential);
        }
        let response = http.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                BackendError::Transient(e.to_string())
            } else {
                BackendError::Fatal(e.to_string())
            }
        })?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(BackendError::Auth(format!("HTTP {status}")));
        }
        if status == reqwest::StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("HTTP {status}")));
        }
        let payload: serde_json::Value = response
            .json()
            .map_err(|e| BackendError::Fatal(format!("invalid response body: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| {
                BackendError::Fatal("response missing choices[0].message.content".into())
            })
    }
}
