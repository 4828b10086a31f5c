//! Plumbing shared by the label and embedding providers: configuration,
//! bounded retry, the on-disk response cache and the HTTP client.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Connection settings for a remote provider. The API key itself never
/// lives here; only the name of the environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model: String,
    pub api_key_env_var: String,
    pub max_parallel: usize,
    pub timeout_s: u64,
    pub max_retries: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint_url: String::new(),
            model: String::new(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            max_parallel: 4,
            timeout_s: 60,
            max_retries: 3,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint_url.is_empty() {
            return Err(Error::ProviderConfig("endpoint_url is empty".into()));
        }
        if !(self.endpoint_url.starts_with("http://") || self.endpoint_url.starts_with("https://")) {
            return Err(Error::ProviderConfig(format!(
                "endpoint_url {:?} is not an http(s) URL",
                self.endpoint_url
            )));
        }
        if self.model.is_empty() {
            return Err(Error::ProviderConfig("model is empty".into()));
        }
        if self.max_parallel == 0 {
            return Err(Error::ProviderConfig("max_parallel must be at least 1".into()));
        }
        Ok(())
    }

    /// Reads the API key from the configured environment variable.
    pub fn api_key(&self) -> Result<String> {
        match std::env::var(&self.api_key_env_var) {
            Ok(k) if !k.trim().is_empty() => Ok(k),
            _ => Err(Error::ProviderConfig(format!(
                "environment variable {} is not set",
                self.api_key_env_var
            ))),
        }
    }
}

/// Exponential backoff: attempt `i` (0-based) waits `base * 2^(i-1)` before
/// running, capped at `max_delay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            return Duration::ZERO;
        }
        let factor = 1u32.checked_shl(attempt - 1).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `f` until it succeeds, fails with a non-retryable error, or the
    /// attempts run out. Only [`Error::Provider`] and
    /// [`Error::UnparseableResponse`] are retried.
    pub fn run<T>(&self, mut f: impl FnMut(u32) -> Result<T>) -> Result<T> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            let delay = self.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match f(attempt) {
                Ok(v) => return Ok(v),
                Err(e @ (Error::Provider(_) | Error::UnparseableResponse(_))) => {
                    log::debug!("attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    prompt_hash: String,
    response: String,
}

/// Append-only JSONL map from prompt hash to raw provider response.
///
/// Writes go through a mutex so concurrent workers never interleave lines.
/// An in-memory cache (no path) behaves the same minus persistence.
#[derive(Debug, Default)]
pub struct ResponseCache {
    path: Option<PathBuf>,
    inner: Mutex<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Opens (or lazily creates) the cache at `path`. Lines that do not
    /// parse are ignored; the last entry for a hash wins.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut map = HashMap::new();
        if path.exists() {
            let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                    map.insert(entry.prompt_hash, entry.response);
                }
            }
        }
        Ok(ResponseCache {
            path: Some(path),
            inner: Mutex::new(map),
        })
    }

    pub fn get(&self, hash: &str) -> Option<String> {
        self.inner.lock().expect("cache lock").get(hash).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, hash: &str, response: &str) -> Result<()> {
        let mut map = self.inner.lock().expect("cache lock");
        if map.get(hash).map(String::as_str) == Some(response) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let line = serde_json::to_string(&CacheLine {
                prompt_hash: hash.to_string(),
                response: response.to_string(),
            })?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        map.insert(hash.to_string(), response.to_string());
        Ok(())
    }
}

#[cfg(feature = "remote")]
pub(crate) mod http {
    use super::*;

    /// Authenticated JSON POST endpoint.
    pub(crate) struct JsonEndpoint {
        url: String,
        key: String,
        agent: ureq::Agent,
    }

    impl JsonEndpoint {
        pub(crate) fn new(cfg: &ProviderConfig) -> Result<Self> {
            cfg.validate()?;
            let key = cfg.api_key()?;
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs(cfg.timeout_s.max(1))))
                .http_status_as_error(false)
                .build()
                .into();
            Ok(JsonEndpoint {
                url: cfg.endpoint_url.clone(),
                key,
                agent,
            })
        }

        /// One POST. Transport failures, 429 and 5xx map to the retryable
        /// [`Error::Provider`]; 401/403 and other 4xx are fatal.
        pub(crate) fn post(&self, body: &serde_json::Value) -> Result<serde_json::Value> {
            let resp = self
                .agent
                .post(&self.url)
                .header("Authorization", &format!("Bearer {}", self.key))
                .send_json(body);
            let mut resp = resp.map_err(|e| Error::Provider(e.to_string()))?;
            let status = resp.status().as_u16();
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            match status {
                200..=299 => serde_json::from_str(&text)
                    .map_err(|e| Error::Provider(format!("invalid JSON from provider: {e}"))),
                401 | 403 => Err(Error::ProviderConfig(format!("authentication rejected (HTTP {status})"))),
                429 | 500..=599 => Err(Error::Provider(format!("HTTP {status}: {}", snippet(&text)))),
                _ => Err(Error::ProviderConfig(format!("HTTP {status}: {}", snippet(&text)))),
            }
        }
    }

    fn snippet(s: &str) -> String {
        s.chars().take(200).collect()
    }
}
