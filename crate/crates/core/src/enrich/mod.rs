//! LLM-driven rewriting of documents before they are embedded.
//!
//! Every document is sent as the user message with a [`PromptTemplate`] as
//! the system message. Responses are cached by (provider, model, prompt,
//! content hash); persistent provider failures either abort the run or fall
//! back to the original text, depending on [`FallbackPolicy`].

mod prompts;
mod rulebook;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompts::{builtin_prompts, PromptRegistry, PromptTemplate};
pub use rulebook::{Rulebook, DEFAULT_RULEBOOK};

use crate::datasets::Document;
use crate::hashing::content_hash;
use crate::provider::{bounded_map, jitter_seed, ConfigError, ProviderError, RetryPolicy};
use crate::store::{Cache, CacheKey, StoreError};
use crate::textprep::CleanText;

#[derive(Debug, Error)]
pub enum EnrichError {
    #[error("document {doc_id}: provider failed after {attempts} attempt(s): {source}")]
    Provider {
        doc_id: String,
        attempts: u32,
        #[source]
        source: ProviderError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("document {0} is empty after preprocessing")]
    EmptyInput(String),
    #[error("nothing to enrich")]
    EmptyBatch,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("invalid rulebook: {0}")]
    InvalidRulebook(String),
    #[error("{} of {total} documents failed; first: {}", .failures.len(), .failures[0])]
    Batch {
        total: usize,
        failures: Vec<EnrichError>,
    },
}

/// One chat-completion call: system prompt plus a single user message.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model_id: &'a str,
    pub system: &'a str,
    pub user: &'a str,
    /// `None` leaves the provider's default in place.
    pub temperature: Option<f64>,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ProviderError>;
}

/// Echoes the user message back unchanged.
#[derive(Debug, Default)]
pub struct IdentityChat {
    calls: AtomicUsize,
}

impl IdentityChat {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatProvider for IdentityChat {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(request.user.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultStep {
    Fail,
    Ok,
}

/// Wraps another provider with a scripted failure schedule.
///
/// The schedule is replayed independently for each distinct user message:
/// the n-th call carrying a given text follows `schedule[n]`, and calls past
/// the end of the schedule follow `then`. Failures are HTTP errors with the
/// configured status.
pub struct FaultChat {
    inner: Arc<dyn ChatProvider>,
    schedule: Vec<FaultStep>,
    then: FaultStep,
    status: u16,
    seen: Mutex<HashMap<String, usize>>,
    calls: AtomicUsize,
}

impl FaultChat {
    pub fn new(
        inner: Arc<dyn ChatProvider>,
        schedule: Vec<FaultStep>,
        then: FaultStep,
        status: u16,
    ) -> Self {
        Self {
            inner,
            schedule,
            then,
            status,
            seen: Mutex::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatProvider for FaultChat {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let n = {
            let mut seen = self.seen.lock().expect("fault schedule poisoned");
            let n = seen.entry(request.user.to_owned()).or_insert(0);
            *n += 1;
            *n - 1
        };
        match self.schedule.get(n).copied().unwrap_or(self.then) {
            FaultStep::Fail => Err(ProviderError::Http {
                status: self.status,
                message: format!("scripted failure on call {}", n + 1),
            }),
            FaultStep::Ok => self.inner.complete(request),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallbackPolicy {
    Fail,
    #[default]
    Passthrough,
}

impl std::str::FromStr for FallbackPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fail" => Ok(Self::Fail),
            "passthrough" => Ok(Self::Passthrough),
            other => Err(format!("unknown fallback policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatBackend {
    Identity,
    /// Dictionary rewriter; `path` defaults to the shipped rulebook.
    Rulebook {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    /// Identity provider behind a scripted failure schedule.
    Fault {
        schedule: Vec<FaultStep>,
        #[serde(default = "fault_then")]
        then: FaultStep,
        #[serde(default = "fault_status")]
        status: u16,
    },
    Http {
        endpoint: String,
        auth_ref: String,
    },
}

fn fault_then() -> FaultStep {
    FaultStep::Ok
}
fn fault_status() -> u16 {
    503
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> Duration {
    Duration::from_secs(120)
}
fn default_max_chars() -> usize {
    8000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatProviderConfig {
    pub provider_id: String,
    pub model_id: String,
    #[serde(flatten)]
    pub backend: ChatBackend,
    /// Absent or `"provider-default"` keeps the provider's own default.
    #[serde(default, with = "temperature")]
    pub temperature: Option<f64>,
    #[serde(
        default = "default_timeout",
        with = "crate::provider::millis",
        rename = "timeout_ms"
    )]
    pub timeout: Duration,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub fallback: FallbackPolicy,
    /// Documents longer than this many characters are sent whole but flagged.
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

mod temperature {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    const DEFAULT: &str = "provider-default";

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Value(f64),
        Named(String),
    }

    pub fn serialize<S: Serializer>(t: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match t {
            Some(v) => Repr::Value(*v),
            None => Repr::Named(DEFAULT.into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Value(v) => Ok(Some(v)),
            Repr::Named(n) if n == DEFAULT => Ok(None),
            Repr::Named(n) => Err(serde::de::Error::custom(format!(
                "temperature must be a number or {DEFAULT:?}, got {n:?}"
            ))),
        }
    }
}

impl ChatProviderConfig {
    pub fn new(provider_id: &str, model_id: &str, backend: ChatBackend) -> Self {
        Self {
            provider_id: provider_id.to_owned(),
            model_id: model_id.to_owned(),
            backend,
            temperature: None,
            timeout: default_timeout(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
            fallback: FallbackPolicy::default(),
            max_chars: default_max_chars(),
        }
    }

    pub fn identity() -> Self {
        Self::new("mock-identity", "identity", ChatBackend::Identity)
    }

    pub fn rulebook() -> Self {
        Self::new(
            "mock-rulebook",
            "rulebook-v1",
            ChatBackend::Rulebook { path: None },
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retry.validate()?;
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be >= 1".into()));
        }
        if let Some(t) = self.temperature {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ConfigError::Invalid(format!(
                    "temperature {t} must be >= 0"
                )));
            }
        }
        if self.provider_id.is_empty() || self.model_id.is_empty() {
            return Err(ConfigError::Invalid(
                "provider_id and model_id are required".into(),
            ));
        }
        Ok(())
    }

    pub fn build_provider(&self) -> Result<Arc<dyn ChatProvider>, EnrichError> {
        self.validate()?;
        Ok(match &self.backend {
            ChatBackend::Identity => Arc::new(IdentityChat::default()),
            ChatBackend::Rulebook { path: None } => Arc::new(Rulebook::shipped()),
            ChatBackend::Rulebook { path: Some(p) } => Arc::new(Rulebook::load(p)?),
            ChatBackend::Fault {
                schedule,
                then,
                status,
            } => Arc::new(FaultChat::new(
                Arc::new(IdentityChat::default()),
                schedule.clone(),
                *then,
                *status,
            )),
            #[cfg(feature = "http")]
            ChatBackend::Http { endpoint, auth_ref } => Arc::new(crate::http::HttpChat::new(
                endpoint,
                auth_ref,
                self.timeout,
            )?),
            #[cfg(not(feature = "http"))]
            ChatBackend::Http { .. } => return Err(ConfigError::Unsupported("http".into()).into()),
        })
    }
}

/// Original and rewritten text with the provenance needed to recompute the
/// cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentRecord {
    pub doc_id: String,
    pub original: CleanText,
    pub enriched: String,
    pub prompt_id: String,
    pub provider_id: String,
    pub model_id: String,
    pub created_at: DateTime<Utc>,
    pub attempt_count: u32,
    /// Set when the provider gave up and `enriched` is the original text.
    pub fallback_used: bool,
    /// Set when the original exceeded the configured character budget.
    #[serde(default)]
    pub over_length: bool,
}

impl EnrichmentRecord {
    pub fn cache_key(&self) -> CacheKey {
        CacheKey::chat(
            &self.provider_id,
            &self.model_id,
            &self.prompt_id,
            &self.original.value,
        )
    }
}

/// A document ready to be rewritten.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnrichInput {
    pub doc_id: String,
    pub text: CleanText,
}

impl EnrichInput {
    pub fn new(doc_id: impl Into<String>, text: CleanText) -> Self {
        Self {
            doc_id: doc_id.into(),
            text,
        }
    }
}

impl From<&Document> for EnrichInput {
    fn from(doc: &Document) -> Self {
        Self::new(doc.id.clone(), CleanText::untouched(doc.text.clone()))
    }
}

#[derive(Serialize, Deserialize)]
struct CachedCompletion {
    text: String,
    attempt_count: u32,
}

/// A chat provider plus the retry, concurrency and fallback settings around it.
#[derive(Clone)]
pub struct Enricher {
    provider: Arc<dyn ChatProvider>,
    cfg: ChatProviderConfig,
}

impl Enricher {
    pub fn from_config(cfg: ChatProviderConfig) -> Result<Self, EnrichError> {
        Ok(Self {
            provider: cfg.build_provider()?,
            cfg,
        })
    }

    /// Uses `provider` in place of the one `cfg` describes.
    pub fn with_provider(
        cfg: ChatProviderConfig,
        provider: Arc<dyn ChatProvider>,
    ) -> Result<Self, EnrichError> {
        cfg.validate()?;
        Ok(Self { provider, cfg })
    }

    pub fn config(&self) -> &ChatProviderConfig {
        &self.cfg
    }

    pub fn enrich(
        &self,
        input: &EnrichInput,
        prompt: &PromptTemplate,
        cache: &Cache,
    ) -> Result<EnrichmentRecord, EnrichError> {
        let cfg = &self.cfg;
        let text = input.text.as_str();
        if text.trim().is_empty() {
            return Err(EnrichError::EmptyInput(input.doc_id.clone()));
        }
        let over_length = text.chars().count() > cfg.max_chars;
        if over_length {
            log::warn!(
                "document {} exceeds {} characters; sending it untruncated",
                input.doc_id,
                cfg.max_chars
            );
        }
        let record =
            |enriched: String, created_at, attempt_count, fallback_used| EnrichmentRecord {
                doc_id: input.doc_id.clone(),
                original: input.text.clone(),
                enriched,
                prompt_id: prompt.id.clone(),
                provider_id: cfg.provider_id.clone(),
                model_id: cfg.model_id.clone(),
                created_at,
                attempt_count,
                fallback_used,
                over_length,
            };

        let key = CacheKey::chat(&cfg.provider_id, &cfg.model_id, &prompt.id, text);
        if let Some(entry) = cache.get(&key)? {
            match serde_json::from_slice::<CachedCompletion>(&entry.payload) {
                Ok(c) => return Ok(record(c.text, entry.created_at, c.attempt_count, false)),
                Err(e) => log::warn!("unreadable cached completion for {}: {e}", input.doc_id),
            }
        }

        let request = ChatRequest {
            model_id: &cfg.model_id,
            system: &prompt.system_text,
            user: text,
            temperature: cfg.temperature,
        };
        let seed = jitter_seed(&key.content_hash);
        let (outcome, attempts) = cfg.retry.run(seed, || self.provider.complete(&request));
        match outcome {
            Ok(enriched) => {
                let created_at = Utc::now();
                let payload = serde_json::to_vec(&CachedCompletion {
                    text: enriched.clone(),
                    attempt_count: attempts,
                })
                .expect("completion serializes");
                cache.put_at(&key, &payload, created_at)?;
                Ok(record(enriched, created_at, attempts, false))
            }
            Err(source) => match cfg.fallback {
                FallbackPolicy::Fail => Err(EnrichError::Provider {
                    doc_id: input.doc_id.clone(),
                    attempts,
                    source,
                }),
                FallbackPolicy::Passthrough => {
                    log::warn!(
                        "document {}: {source} after {attempts} attempt(s); keeping original text",
                        input.doc_id
                    );
                    Ok(record(text.to_owned(), Utc::now(), attempts, true))
                }
            },
        }
    }

    /// Rewrites every input with at most `max_in_flight` requests outstanding.
    /// Output order matches input order.
    pub fn enrich_batch(
        &self,
        inputs: &[EnrichInput],
        prompt: &PromptTemplate,
        cache: &Cache,
    ) -> Result<Vec<EnrichmentRecord>, EnrichError> {
        if inputs.is_empty() {
            return Err(EnrichError::EmptyBatch);
        }
        // Repeated texts share one request so every copy gets the same record.
        let mut first_seen: HashMap<&str, usize> = HashMap::new();
        let mut unique: Vec<&EnrichInput> = Vec::new();
        let slots: Vec<usize> = inputs
            .iter()
            .map(|input| {
                *first_seen.entry(input.text.as_str()).or_insert_with(|| {
                    unique.push(input);
                    unique.len() - 1
                })
            })
            .collect();
        let results = bounded_map(&unique, self.cfg.max_in_flight, |_, input| {
            self.enrich(input, prompt, cache)
        });
        let mut records = Vec::with_capacity(inputs.len());
        let mut failures = Vec::new();
        for (input, slot) in inputs.iter().zip(slots) {
            if let Ok(rec) = &results[slot] {
                records.push(EnrichmentRecord {
                    doc_id: input.doc_id.clone(),
                    original: input.text.clone(),
                    ..rec.clone()
                });
            }
        }
        for r in results {
            if let Err(e) = r {
                failures.push(e);
            }
        }
        if failures.is_empty() {
            Ok(records)
        } else {
            Err(EnrichError::Batch {
                total: inputs.len(),
                failures,
            })
        }
    }
}

/// Content hash of a prompt's system text, used to name ad-hoc prompts.
pub fn prompt_fingerprint(system_text: &str) -> String {
    content_hash(system_text)[..12].to_owned()
}
