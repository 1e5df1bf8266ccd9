//! Embedding providers, the cached batch embedder, and vector math.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::hashing::content_hash;
use crate::provider::{bounded_map, jitter_seed, ConfigError, ProviderError, RetryPolicy};
use crate::store::{decode_vector, encode_vector, Cache, CacheKey, StoreError};
use crate::textprep::tokenize;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector contains a non-finite value")]
    NonFinite,
    #[error("cannot embed an empty text (input #{0})")]
    EmptyText(usize),
    #[error("nothing to embed")]
    EmptyBatch,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A provider-produced embedding with enough provenance to find it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    pub provider_id: String,
    pub model_id: String,
    /// Content hash of the embedded text.
    pub source_hash: String,
}

impl EmbeddingVector {
    pub fn new(
        values: Vec<f64>,
        provider_id: impl Into<String>,
        model_id: impl Into<String>,
        source_hash: impl Into<String>,
    ) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self {
            values,
            provider_id: provider_id.into(),
            model_id: model_id.into(),
            source_hash: source_hash.into(),
        })
    }

    /// An anonymous vector, for math on raw values.
    pub fn from_values(values: Vec<f64>) -> Result<Self, EmbedError> {
        Self::new(values, "", "", "")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity of two raw vectors, clamped to `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    cosine(&a.values, &b.values)
}

pub fn normalize(v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let n = l2_norm(v);
    if n == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

pub fn l2_normalize(v: &EmbeddingVector) -> Result<EmbeddingVector, EmbedError> {
    Ok(EmbeddingVector {
        values: normalize(&v.values)?,
        ..v.clone()
    })
}

/// Something that turns a batch of texts into one vector per text.
pub trait EmbedProvider: Send + Sync {
    fn embed(&self, model_id: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

/// Offline embedder: signed feature hashing of whitespace tokens.
///
/// Each token is hashed together with the seed (SHA-256 over the seed's
/// little-endian bytes followed by the token's UTF-8 bytes); the first eight
/// digest bytes pick a bucket, the ninth byte's low bit picks the sign. The
/// signed bucket counts are then l2-normalized.
#[derive(Debug)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, ConfigError> {
        if dim < 2 {
            return Err(ConfigError::Invalid(format!("mock embedder dim {dim} < 2")));
        }
        Ok(Self {
            dim,
            seed,
            calls: AtomicUsize::new(0),
        })
    }

    /// Number of `embed` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn vectorize(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let mut counts = vec![0.0; self.dim];
        for token in tokenize(text) {
            let digest = Sha256::new()
                .chain_update(self.seed.to_le_bytes())
                .chain_update(token.as_bytes())
                .finalize();
            let mut head = [0u8; 8];
            head.copy_from_slice(&digest[..8]);
            let bucket = (u64::from_le_bytes(head) % self.dim as u64) as usize;
            counts[bucket] += if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        normalize(&counts).map_err(|_| {
            ProviderError::Rejected(format!("text {text:?} hashes to the zero vector"))
        })
    }
}

impl EmbedProvider for MockEmbedder {
    fn embed(&self, _model_id: &str, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        texts.iter().map(|t| self.vectorize(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedBackend {
    Mock {
        dim: usize,
        seed: u64,
    },
    /// Any endpoint speaking the common embeddings JSON schema.
    Http {
        endpoint: String,
        auth_ref: String,
    },
}

fn default_batch_size() -> usize {
    64
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> Duration {
    Duration::from_secs(60)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedProviderConfig {
    pub provider_id: String,
    pub model_id: String,
    #[serde(flatten)]
    pub backend: EmbedBackend,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
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
}

impl EmbedProviderConfig {
    pub fn mock(dim: usize, seed: u64) -> Self {
        Self {
            provider_id: "mock".into(),
            model_id: format!("mock-hash-{dim}-{seed}"),
            backend: EmbedBackend::Mock { dim, seed },
            batch_size: default_batch_size(),
            timeout: default_timeout(),
            retry: RetryPolicy::default(),
            max_in_flight: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retry.validate()?;
        if self.batch_size == 0 {
            return Err(ConfigError::Invalid("batch_size must be >= 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_provider(&self) -> Result<Arc<dyn EmbedProvider>, ConfigError> {
        self.validate()?;
        match &self.backend {
            EmbedBackend::Mock { dim, seed } => Ok(Arc::new(MockEmbedder::new(*dim, *seed)?)),
            #[cfg(feature = "http")]
            EmbedBackend::Http { endpoint, auth_ref } => Ok(Arc::new(
                crate::http::HttpEmbedder::new(endpoint, auth_ref, self.timeout)?,
            )),
            #[cfg(not(feature = "http"))]
            EmbedBackend::Http { .. } => Err(ConfigError::Unsupported("http".into())),
        }
    }
}

/// A configured provider plus the batching and retry settings around it.
#[derive(Clone)]
pub struct Embedder {
    provider: Arc<dyn EmbedProvider>,
    cfg: EmbedProviderConfig,
}

impl Embedder {
    pub fn from_config(cfg: EmbedProviderConfig) -> Result<Self, ConfigError> {
        Ok(Self {
            provider: cfg.build_provider()?,
            cfg,
        })
    }

    /// Uses `provider` in place of the one `cfg` describes.
    pub fn with_provider(
        cfg: EmbedProviderConfig,
        provider: Arc<dyn EmbedProvider>,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self { provider, cfg })
    }

    pub fn config(&self) -> &EmbedProviderConfig {
        &self.cfg
    }

    /// Embeds `texts` in order, serving what it can from `cache` and sending
    /// the rest to the provider in chunks of `batch_size`.
    ///
    /// Provider output is rounded to `f32`, the precision of the cache
    /// format, so cold and warm runs return identical vectors.
    pub fn embed_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
        cache: &Cache,
    ) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyBatch);
        }
        if let Some(i) = texts.iter().position(|t| t.as_ref().is_empty()) {
            return Err(EmbedError::EmptyText(i));
        }
        let cfg = &self.cfg;
        let mut found: Vec<Option<Vec<f32>>> = Vec::with_capacity(texts.len());
        let mut missing = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let key = CacheKey::embed(&cfg.provider_id, &cfg.model_id, t.as_ref());
            match cache.get(&key)? {
                Some(entry) => {
                    let (_, values) = decode_vector(&entry.payload)?;
                    found.push(Some(values));
                }
                None => {
                    found.push(None);
                    missing.push(i);
                }
            }
        }

        // identical uncached texts are sent once
        let mut unique: Vec<usize> = Vec::new();
        for &i in &missing {
            if !unique
                .iter()
                .any(|&j| texts[j].as_ref() == texts[i].as_ref())
            {
                unique.push(i);
            }
        }
        let chunks: Vec<&[usize]> = unique.chunks(cfg.batch_size).collect();
        let results = bounded_map(&chunks, cfg.max_in_flight, |_, chunk| {
            self.fetch_chunk(texts, chunk, cache)
        });
        for (chunk, result) in chunks.iter().zip(results) {
            for (&i, values) in chunk.iter().zip(result?) {
                for &j in &missing {
                    if found[j].is_none() && texts[j].as_ref() == texts[i].as_ref() {
                        found[j] = Some(values.clone());
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(texts.len());
        let mut dim = None;
        for (t, values) in texts.iter().zip(found) {
            let values = values.expect("every text resolved");
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    expected,
                    found: values.len(),
                });
            }
            out.push(EmbeddingVector::new(
                values.into_iter().map(f64::from).collect(),
                &cfg.provider_id,
                &cfg.model_id,
                content_hash(t.as_ref()),
            )?);
        }
        Ok(out)
    }

    fn fetch_chunk<S: AsRef<str>>(
        &self,
        texts: &[S],
        chunk: &[usize],
        cache: &Cache,
    ) -> Result<Vec<Vec<f32>>, EmbedError> {
        let cfg = &self.cfg;
        let batch: Vec<&str> = chunk.iter().map(|&i| texts[i].as_ref()).collect();
        let seed = jitter_seed(&content_hash(batch[0]));
        let (result, _) = cfg
            .retry
            .run(seed, || self.provider.embed(&cfg.model_id, &batch));
        let vectors = result?;
        if vectors.len() != batch.len() {
            return Err(ProviderError::Malformed(format!(
                "sent {} texts, received {} vectors",
                batch.len(),
                vectors.len()
            ))
            .into());
        }
        let mut out = Vec::with_capacity(vectors.len());
        for (text, v) in batch.iter().zip(vectors) {
            let v: Vec<f32> = v.into_iter().map(|x| x as f32).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::NonFinite);
            }
            let key = CacheKey::embed(&cfg.provider_id, &cfg.model_id, text);
            cache.put(&key, &encode_vector(&cfg.model_id, &v))?;
            out.push(v);
        }
        Ok(out)
    }
}
