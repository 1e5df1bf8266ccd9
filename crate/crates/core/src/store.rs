//! Content-addressed, crash-safe cache for chat completions and embeddings.
//!
//! On-disk layout, relative to the cache root:
//!
//! ```text
//! <namespace>/<first 2 hex of key digest>/<key digest>            payload bytes
//! <namespace>/<first 2 hex of key digest>/<key digest>.meta.json  sidecar
//! tmp/                                                            staging area
//! ```
//!
//! A put stages both files under `tmp/`, renames the payload into place and
//! then renames the sidecar. The sidecar is the commit record: an entry
//! without one does not exist, and a sidecar whose `payload_digest` does not
//! match the payload is reported as corrupt and treated as a miss.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{content_hash, sha256_hex};

/// Environment variable consulted for the cache root when no flag is given.
pub const CACHE_DIR_ENV: &str = "ENRICHBENCH_CACHE";

const KEY_VERSION: &str = "enrichbench-cache-key/v1";
const META_SUFFIX: &str = ".meta.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cache I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("refusing to cache an empty payload")]
    EmptyPayload,
    #[error("put aborted at {0:?}")]
    Aborted(AbortPoint),
    #[error("malformed vector payload: {0}")]
    Codec(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Chat,
    Embed,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Chat => "chat",
            Namespace::Embed => "embed",
        }
    }
}

/// Identity of one cached provider call.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub namespace: Namespace,
    pub provider_id: String,
    pub model_id: String,
    /// `-` for embeddings.
    pub prompt_id: String,
    /// Lowercase hex SHA-256 of the exact input text.
    pub content_hash: String,
}

impl CacheKey {
    pub fn chat(provider_id: &str, model_id: &str, prompt_id: &str, text: &str) -> Self {
        Self {
            namespace: Namespace::Chat,
            provider_id: provider_id.to_owned(),
            model_id: model_id.to_owned(),
            prompt_id: prompt_id.to_owned(),
            content_hash: content_hash(text),
        }
    }

    pub fn embed(provider_id: &str, model_id: &str, text: &str) -> Self {
        Self {
            namespace: Namespace::Embed,
            provider_id: provider_id.to_owned(),
            model_id: model_id.to_owned(),
            prompt_id: "-".to_owned(),
            content_hash: content_hash(text),
        }
    }

    /// Frozen serialization: a compact JSON array of the version tag and the
    /// five fields, in declaration order.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&[
            KEY_VERSION,
            self.namespace.as_str(),
            &self.provider_id,
            &self.model_id,
            &self.prompt_id,
            &self.content_hash,
        ])
        .expect("string array serializes")
    }

    /// Lowercase hex SHA-256 of [`CacheKey::canonical`]; the entry's file name.
    pub fn digest(&self) -> String {
        sha256_hex(self.canonical())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub key: CacheKey,
    pub payload: Vec<u8>,
    pub created_at: DateTime<Utc>,
    pub payload_digest: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    key: CacheKey,
    created_at: DateTime<Utc>,
    payload_digest: String,
    payload_len: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
    pub hit_count: u64,
    pub miss_count: u64,
    /// Entries found on disk but rejected by digest or key verification.
    pub corrupt_count: u64,
}

/// Points inside [`Cache::put`] where an abort hook can simulate a crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortPoint {
    BeforePayloadRename,
    BeforeSidecarRename,
}

type AbortHook = Arc<dyn Fn(AbortPoint) -> bool + Send + Sync>;

#[derive(Default)]
struct Counters {
    hits: AtomicU64,
    misses: AtomicU64,
    corrupt: AtomicU64,
    staged: AtomicU64,
}

/// Handle to a cache root. Clones share hit/miss counters.
#[derive(Clone)]
pub struct Cache {
    root: PathBuf,
    counters: Arc<Counters>,
    abort_hook: Option<AbortHook>,
}

impl std::fmt::Debug for Cache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cache").field("root", &self.root).finish()
    }
}

impl Cache {
    /// Opens (creating if needed) a cache rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("tmp")).map_err(io_err(&root))?;
        Ok(Self {
            root,
            counters: Arc::default(),
            abort_hook: None,
        })
    }

    /// Installs a hook consulted before each rename in `put`; returning
    /// `true` stops the put there, leaving only staged temp files behind.
    pub fn with_abort_hook(
        mut self,
        hook: impl Fn(AbortPoint) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.abort_hook = Some(Arc::new(hook));
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of the payload file for `key`; the sidecar sits next to it.
    pub fn payload_path(&self, key: &CacheKey) -> PathBuf {
        let digest = key.digest();
        self.root
            .join(key.namespace.as_str())
            .join(&digest[..2])
            .join(digest)
    }

    fn sidecar_path(payload_path: &Path) -> PathBuf {
        let mut name = payload_path.as_os_str().to_owned();
        name.push(META_SUFFIX);
        PathBuf::from(name)
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CacheEntry>, StoreError> {
        let found = self.lookup(key)?;
        let counter = if found.is_some() {
            &self.counters.hits
        } else {
            &self.counters.misses
        };
        counter.fetch_add(1, Ordering::Relaxed);
        Ok(found)
    }

    fn lookup(&self, key: &CacheKey) -> Result<Option<CacheEntry>, StoreError> {
        let payload_path = self.payload_path(key);
        let sidecar_path = Self::sidecar_path(&payload_path);
        let Some(meta_bytes) = read_optional(&sidecar_path)? else {
            return Ok(None);
        };
        let sidecar: Sidecar = match serde_json::from_slice(&meta_bytes) {
            Ok(s) => s,
            Err(e) => return Ok(self.reject(&sidecar_path, &format!("unreadable sidecar: {e}"))),
        };
        if &sidecar.key != key {
            return Ok(self.reject(&sidecar_path, "sidecar key does not match lookup key"));
        }
        let Some(payload) = read_optional(&payload_path)? else {
            return Ok(self.reject(&payload_path, "sidecar present but payload missing"));
        };
        let digest = sha256_hex(&payload);
        if digest != sidecar.payload_digest {
            return Ok(self.reject(&payload_path, "payload digest mismatch"));
        }
        Ok(Some(CacheEntry {
            key: sidecar.key,
            payload,
            created_at: sidecar.created_at,
            payload_digest: digest,
        }))
    }

    fn reject(&self, path: &Path, why: &str) -> Option<CacheEntry> {
        log::warn!("ignoring corrupt cache entry {}: {why}", path.display());
        self.counters.corrupt.fetch_add(1, Ordering::Relaxed);
        None
    }

    /// Publishes `payload` under `key` with the current time as `created_at`.
    pub fn put(&self, key: &CacheKey, payload: &[u8]) -> Result<CacheEntry, StoreError> {
        self.put_at(key, payload, Utc::now())
    }

    pub fn put_at(
        &self,
        key: &CacheKey,
        payload: &[u8],
        created_at: DateTime<Utc>,
    ) -> Result<CacheEntry, StoreError> {
        if payload.is_empty() {
            return Err(StoreError::EmptyPayload);
        }
        let payload_path = self.payload_path(key);
        let sidecar_path = Self::sidecar_path(&payload_path);
        let dir = payload_path.parent().expect("payload path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        let payload_digest = sha256_hex(payload);
        let sidecar = Sidecar {
            key: key.clone(),
            created_at,
            payload_digest: payload_digest.clone(),
            payload_len: payload.len() as u64,
        };
        let sidecar_bytes = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");

        let staged_payload = self.stage(payload)?;
        self.publish(
            &staged_payload,
            &payload_path,
            AbortPoint::BeforePayloadRename,
        )?;
        let staged_sidecar = self.stage(&sidecar_bytes)?;
        self.publish(
            &staged_sidecar,
            &sidecar_path,
            AbortPoint::BeforeSidecarRename,
        )?;

        Ok(CacheEntry {
            key: key.clone(),
            payload: payload.to_vec(),
            created_at,
            payload_digest,
        })
    }

    fn stage(&self, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let n = self.counters.staged.fetch_add(1, Ordering::Relaxed);
        let path = self.root.join("tmp").join(format!(
            "{}-{:?}-{n}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let mut file = File::create(&path).map_err(io_err(&path))?;
        file.write_all(bytes).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
        Ok(path)
    }

    fn publish(&self, staged: &Path, dest: &Path, point: AbortPoint) -> Result<(), StoreError> {
        if let Some(hook) = &self.abort_hook {
            if hook(point) {
                return Err(StoreError::Aborted(point));
            }
        }
        fs::rename(staged, dest).map_err(io_err(dest))
    }

    /// Entry and byte counts come from disk; hit/miss counts are per process.
    pub fn stats(&self) -> Result<CacheStats, StoreError> {
        let mut stats = CacheStats {
            hit_count: self.counters.hits.load(Ordering::Relaxed),
            miss_count: self.counters.misses.load(Ordering::Relaxed),
            corrupt_count: self.counters.corrupt.load(Ordering::Relaxed),
            ..CacheStats::default()
        };
        for ns in [Namespace::Chat, Namespace::Embed] {
            let ns_dir = self.root.join(ns.as_str());
            let Some(shards) = read_dir_optional(&ns_dir)? else {
                continue;
            };
            for shard in shards {
                let shard = shard.map_err(io_err(&ns_dir))?.path();
                let Some(files) = read_dir_optional(&shard)? else {
                    continue;
                };
                for file in files {
                    let path = file.map_err(io_err(&shard))?.path();
                    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    if let Some(stem) = name.strip_suffix(META_SUFFIX) {
                        if let Ok(meta) = fs::metadata(shard.join(stem)) {
                            stats.entries += 1;
                            stats.bytes += meta.len();
                        }
                    }
                }
            }
        }
        Ok(stats)
    }
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, StoreError> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(bytes)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn read_dir_optional(path: &Path) -> Result<Option<fs::ReadDir>, StoreError> {
    match fs::read_dir(path) {
        Ok(rd) => Ok(Some(rd)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path)(e)),
    }
}

/// Binary embedding record: `dim: u32 LE`, `model_id_len: u32 LE`, the
/// model id's UTF-8 bytes, then `dim` little-endian IEEE-754 `f32` values.
pub fn encode_vector(model_id: &str, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + model_id.len() + 4 * values.len());
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    out.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(model_id.as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_vector(bytes: &[u8]) -> Result<(String, Vec<f32>), StoreError> {
    fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], StoreError> {
        if bytes.len() < n {
            return Err(StoreError::Codec(format!(
                "needed {n} more bytes, {} left",
                bytes.len()
            )));
        }
        let (head, tail) = bytes.split_at(n);
        *bytes = tail;
        Ok(head)
    }
    fn u32_le(bytes: &mut &[u8]) -> Result<usize, StoreError> {
        let b = take(bytes, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    let mut rest = bytes;
    let dim = u32_le(&mut rest)?;
    let model_len = u32_le(&mut rest)?;
    let model_id = std::str::from_utf8(take(&mut rest, model_len)?)
        .map_err(|e| StoreError::Codec(format!("model id is not UTF-8: {e}")))?
        .to_owned();
    let floats = take(&mut rest, dim * 4)?;
    if !rest.is_empty() {
        return Err(StoreError::Codec(format!("{} trailing bytes", rest.len())));
    }
    let values = floats
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((model_id, values))
}
