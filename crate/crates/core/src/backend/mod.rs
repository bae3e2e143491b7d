//! Completion backends returning top-5 token log-probabilities, behind a
//! content-addressed cache and a bounded-parallel dispatcher.

pub mod cache;
pub mod live;
pub mod mock;

pub use cache::{cache_key, Cache, CacheError, CacheRecord};
pub use live::LiveBackend;
pub use mock::{AnswerKey, Cue, MockBackend, PlantSpec};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The endpoint returns at most this many alternatives per position.
pub const TOP_K: usize = 5;
pub const MAX_POSITIONS: u8 = 4;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("invalid token distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("mock backend has no answer key entry for prompt {0:?}")]
    UnknownPrompt(String),
    #[error("completion budget exhausted; run interrupted")]
    Interrupted,
    #[error("{failed} of {total} completions failed, above the ceiling of {ceiling}")]
    FailureCeiling { failed: usize, total: usize, ceiling: f64 },
    #[error(transparent)]
    Cache(#[from] CacheError),
}

impl BackendError {
    /// 429, 5xx and timeouts are worth another attempt; other client errors
    /// are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            BackendError::Timeout | BackendError::Network(_) => true,
            _ => false,
        }
    }
}

/// Top-k alternatives at one decoded position, most probable first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    pub entries: Vec<(String, f64)>,
    pub echoed_prompt_hash: String,
}

impl TokenDistribution {
    pub fn new(mut entries: Vec<(String, f64)>, echoed_prompt_hash: String) -> Result<Self, BackendError> {
        if entries.len() > TOP_K {
            return Err(BackendError::InvalidDistribution(format!("{} entries, at most {TOP_K} allowed", entries.len())));
        }
        if let Some((tok, lp)) = entries.iter().find(|(_, lp)| !(lp.is_finite() && *lp <= 0.0)) {
            return Err(BackendError::InvalidDistribution(format!("logprob {lp} for token {tok:?}")));
        }
        let mass: f64 = entries.iter().map(|(_, lp)| lp.exp()).sum();
        if mass > 1.0 + 1e-9 {
            return Err(BackendError::InvalidDistribution(format!("probabilities sum to {mass}")));
        }
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries, echoed_prompt_hash })
    }

    pub fn probabilities(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.entries.iter().map(|(t, lp)| (t.as_str(), lp.exp()))
    }

    pub fn argmax(&self) -> Option<&str> {
        self.entries.first().map(|(t, _)| t.as_str())
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Decoding parameters; part of the cache key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub positions: u8,
    pub logprobs: u8,
    pub temperature: f64,
}

impl DecodeParams {
    pub fn new(positions: u8) -> Self {
        Self { positions, logprobs: TOP_K as u8, temperature: 0.0 }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(1..=MAX_POSITIONS).contains(&self.positions) {
            return Err(BackendError::InvalidConfig(format!("positions must be in 1..={MAX_POSITIONS}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_backoff_ms: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_key_env")]
    pub api_key_env_name: String,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
    /// Fraction of failed completions above which a run aborts.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_in_flight() -> usize {
    8
}
fn default_timeout() -> u64 {
    30_000
}
fn default_failure_rate() -> f64 {
    0.01
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1/completions".into(),
            model_name: "gpt-3.5-turbo-instruct".into(),
            api_key_env_name: default_key_env(),
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            request_timeout_ms: default_timeout(),
            max_failure_rate: default_failure_rate(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_in_flight == 0 {
            return Err(BackendError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(BackendError::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(BackendError::InvalidConfig("max_failure_rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

pub enum Backend {
    Live(LiveBackend),
    Mock(MockBackend),
}

impl Backend {
    pub fn model_name(&self) -> &str {
        match self {
            Backend::Live(b) => b.model_name(),
            Backend::Mock(b) => b.model_name(),
        }
    }

    async fn fetch(&self, prompt: &str, params: DecodeParams) -> Result<Vec<TokenDistribution>, BackendError> {
        match self {
            Backend::Live(b) => b.complete(prompt, params).await,
            Backend::Mock(b) => b.complete(prompt, params),
        }
    }
}

/// A backend with an optional cache in front of it. Counts the completions
/// that actually reach the backend.
pub struct Client {
    backend: Backend,
    cache: Option<Arc<Cache>>,
    backend_calls: AtomicUsize,
    cache_hits: AtomicUsize,
    call_budget: Option<AtomicUsize>,
}

impl Client {
    pub fn new(backend: Backend, cache: Option<Arc<Cache>>) -> Self {
        Self {
            backend,
            cache,
            backend_calls: AtomicUsize::new(0),
            cache_hits: AtomicUsize::new(0),
            call_budget: None,
        }
    }

    /// Stops issuing backend calls after `n`; later misses fail with
    /// [`BackendError::Interrupted`]. Simulates an interrupted run.
    pub fn with_call_budget(mut self, n: usize) -> Self {
        self.call_budget = Some(AtomicUsize::new(n));
        self
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> usize {
        self.cache_hits.load(Ordering::SeqCst)
    }

    /// Top-k distributions at each of the first `params.positions` positions.
    /// Served from the cache when possible; otherwise one backend call whose
    /// result is persisted before returning.
    pub async fn complete(&self, prompt: &str, params: DecodeParams) -> Result<Vec<TokenDistribution>, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        params.validate()?;
        let model = self.backend.model_name().to_string();
        let key = cache_key(&model, prompt, &params);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(hit);
            }
        }
        if let Some(budget) = &self.call_budget {
            budget
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .map_err(|_| BackendError::Interrupted)?;
        }
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let dists = self.backend.fetch(prompt, params).await?;
        if let Some(cache) = &self.cache {
            let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            cache.put(CacheRecord { key, model, decode: params, distributions: dists.clone(), created_at })?;
        }
        Ok(dists)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchOptions {
    pub max_in_flight: usize,
    pub max_failure_rate: f64,
}

impl From<&BackendConfig> for DispatchOptions {
    fn from(c: &BackendConfig) -> Self {
        Self { max_in_flight: c.max_in_flight, max_failure_rate: c.max_failure_rate }
    }
}

/// Per-job outcomes in job order. Failures carry the error text.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchReport {
    pub outcomes: Vec<Result<Vec<TokenDistribution>, String>>,
    pub failures: usize,
}

/// Completes every job with at most `max_in_flight` requests outstanding.
/// Aborts once the failure count exceeds the ceiling, and reports an
/// interruption if the client's call budget ran out.
pub async fn dispatch(
    client: &Client,
    jobs: &[(String, DecodeParams)],
    opts: DispatchOptions,
) -> Result<DispatchReport, BackendError> {
    if opts.max_in_flight == 0 {
        return Err(BackendError::InvalidConfig("max_in_flight must be at least 1".into()));
    }
    let total = jobs.len();
    let allowed = (opts.max_failure_rate * total as f64).floor() as usize;
    let mut outcomes: Vec<Option<Result<Vec<TokenDistribution>, String>>> = vec![None; total];
    let mut failures = 0;
    let mut interrupted = false;

    let mut results = stream::iter(jobs.iter().enumerate())
        .map(|(i, (prompt, params))| async move { (i, client.complete(prompt, *params).await) })
        .buffer_unordered(opts.max_in_flight);
    while let Some((i, result)) = results.next().await {
        match result {
            Ok(d) => outcomes[i] = Some(Ok(d)),
            Err(BackendError::Interrupted) => interrupted = true,
            Err(e) => {
                log::warn!("completion {i} failed: {e}");
                failures += 1;
                outcomes[i] = Some(Err(e.to_string()));
                if failures > allowed {
                    return Err(BackendError::FailureCeiling { failed: failures, total, ceiling: opts.max_failure_rate });
                }
            }
        }
    }
    if interrupted {
        return Err(BackendError::Interrupted);
    }
    Ok(DispatchReport { outcomes: outcomes.into_iter().map(|o| o.expect("every job yields once")).collect(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distribution_is_sorted_and_validated() {
        let d = TokenDistribution::new(vec![(" no".into(), (0.2f64).ln()), (" yes".into(), (0.7f64).ln())], "h".into())
            .unwrap();
        assert_eq!(d.argmax(), Some(" yes"));
        assert!(TokenDistribution::new(vec![("a".into(), 0.1)], "h".into()).is_err());
        assert!(TokenDistribution::new(vec![("a".into(), f64::NAN)], "h".into()).is_err());
        let over = vec![("a".into(), (0.6f64).ln()), ("b".into(), (0.6f64).ln())];
        assert!(TokenDistribution::new(over, "h".into()).is_err());
        let six: Vec<(String, f64)> = (0..6).map(|i| (i.to_string(), -3.0)).collect();
        assert!(TokenDistribution::new(six, "h".into()).is_err());
    }

    #[test]
    fn retryable_classes() {
        assert!(BackendError::Http { status: 429, body: String::new() }.is_retryable());
        assert!(BackendError::Http { status: 503, body: String::new() }.is_retryable());
        assert!(BackendError::Timeout.is_retryable());
        assert!(!BackendError::Http { status: 400, body: String::new() }.is_retryable());
        assert!(!BackendError::Http { status: 401, body: String::new() }.is_retryable());
        assert!(!BackendError::Malformed(String::new()).is_retryable());
    }

    #[test]
    fn config_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        let c = BackendConfig { max_in_flight: 0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = BackendConfig { retry: RetryPolicy { max_attempts: 0, base_backoff_ms: 1 }, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn positions_bounds() {
        assert!(DecodeParams::new(0).validate().is_err());
        assert!(DecodeParams::new(4).validate().is_ok());
        assert!(DecodeParams::new(5).validate().is_err());
    }
}
