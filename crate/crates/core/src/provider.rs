//! Pieces shared by the chat and embedding providers: error classification,
//! retry with backoff, credential lookup and bounded fan-out.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Connection refused, timeout, TLS failure and similar.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Http { status: u16, message: String },
    /// The provider answered but the body was not usable.
    #[error("malformed provider response: {0}")]
    Malformed(String),
    /// The provider refused this input; retrying will not help.
    #[error("input rejected: {0}")]
    Rejected(String),
}

impl ProviderError {
    /// Transport errors, 429 and 5xx are retried; every other failure is final.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            ProviderError::Malformed(_) | ProviderError::Rejected(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("credential environment variable {0} is not set")]
    MissingCredential(String),
    #[error("invalid provider configuration: {0}")]
    Invalid(String),
    #[error("provider kind {0:?} is not available in this build")]
    Unsupported(String),
}

/// Reads the credential named by `auth_ref` from the environment.
pub fn resolve_credential(auth_ref: &str) -> Result<String, ConfigError> {
    match std::env::var(auth_ref) {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(ConfigError::MissingCredential(auth_ref.to_owned())),
    }
}

/// Exponential backoff with jitter.
///
/// The delay before retry `n` (1-based) is drawn uniformly from
/// `[d/2, d)` where `d = min(max_delay, base_delay * 2^(n-1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

pub const MAX_RETRIES_LIMIT: u32 = 10;

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(ConfigError::Invalid(format!(
                "max_retries {} exceeds {MAX_RETRIES_LIMIT}",
                self.max_retries
            )));
        }
        Ok(())
    }

    pub fn delay_before_retry(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(
            1u32.checked_shl(retry.saturating_sub(1))
                .unwrap_or(u32::MAX),
        );
        let cap = exp.min(self.max_delay);
        if cap.is_zero() {
            return cap;
        }
        cap.mul_f64(rng.gen_range(0.5..1.0))
    }

    /// Runs `call` until it succeeds, fails permanently, or the retry budget
    /// is spent. Returns the outcome and the number of attempts made.
    ///
    /// `jitter_seed` makes the backoff schedule reproducible per call site.
    pub fn run<T>(
        &self,
        jitter_seed: u64,
        mut call: impl FnMut() -> Result<T, ProviderError>,
    ) -> (Result<T, ProviderError>, u32) {
        let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match call() {
                Ok(v) => return (Ok(v), attempts),
                Err(e) if e.is_retryable() && attempts <= self.max_retries => {
                    let delay = self.delay_before_retry(attempts, &mut rng);
                    log::debug!("attempt {attempts} failed ({e}); retrying in {delay:?}");
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(e) => return (Err(e), attempts),
            }
        }
    }
}

/// Seed for backoff jitter derived from a content hash.
pub fn jitter_seed(hex_digest: &str) -> u64 {
    u64::from_str_radix(hex_digest.get(..16).unwrap_or("0"), 16).unwrap_or(0)
}

pub(crate) mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Applies `f` to every item with at most `max_in_flight` calls running at
/// once, returning results in input order.
pub fn bounded_map<T, R, F>(items: &[T], max_in_flight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = max_in_flight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(i, item);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}
