//! HTTP client for an OpenAI-style legacy completions endpoint.

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{prompt_hash, BackendConfig, BackendError, DecodeParams, RetryPolicy, TokenDistribution};

pub struct LiveBackend {
    http: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: String,
    retry: RetryPolicy,
    timeout: Duration,
}

impl LiveBackend {
    /// Reads the API key from the environment variable named in `config`.
    pub fn from_env(config: &BackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env_name)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| BackendError::MissingApiKey(config.api_key_env_name.clone()))?;
        Self::with_key(config, key)
    }

    pub fn with_key(config: &BackendConfig, api_key: String) -> Result<Self, BackendError> {
        config.validate()?;
        let http = reqwest::Client::builder().build().map_err(|e| BackendError::Network(e.to_string()))?;
        Ok(Self {
            http,
            endpoint: config.endpoint_url.clone(),
            model: config.model_name.clone(),
            api_key,
            retry: config.retry.clone(),
            timeout: Duration::from_millis(config.request_timeout_ms),
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model
    }

    pub async fn complete(&self, prompt: &str, params: DecodeParams) -> Result<Vec<TokenDistribution>, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.request_once(prompt, params).await {
                Ok(d) => return Ok(d),
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    let delay = backoff(self.retry.base_backoff_ms, attempt);
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    tokio::time::sleep(delay).await;
                }
                Err(e) => return Err(e),
            }
        }
    }

    async fn request_once(&self, prompt: &str, params: DecodeParams) -> Result<Vec<TokenDistribution>, BackendError> {
        let body = json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": params.positions,
            "logprobs": params.logprobs,
            "temperature": params.temperature,
        });
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .timeout(self.timeout)
            .json(&body)
            .send()
            .await
            .map_err(classify)?;
        let status = resp.status();
        let text = resp.text().await.map_err(classify)?;
        if !status.is_success() {
            return Err(BackendError::Http { status: status.as_u16(), body: text });
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parse_top_logprobs(&value, &prompt_hash(prompt))
    }
}

fn classify(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Network(e.to_string())
    }
}

/// Exponential backoff with multiplicative jitter in [0.5, 1.5).
fn backoff(base_ms: u64, attempt: u32) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
    let jitter: f64 = rand::rng().random_range(0.5..1.5);
    Duration::from_millis((exp as f64 * jitter) as u64)
}

/// Reads `choices[0].logprobs.top_logprobs`, one object per position.
pub fn parse_top_logprobs(value: &Value, echoed_prompt_hash: &str) -> Result<Vec<TokenDistribution>, BackendError> {
    let positions = value
        .pointer("/choices/0/logprobs/top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].logprobs.top_logprobs".into()))?;
    if positions.is_empty() {
        return Err(BackendError::Malformed("top_logprobs is empty".into()));
    }
    positions
        .iter()
        .map(|pos| {
            let obj = pos.as_object().ok_or_else(|| BackendError::Malformed("top_logprobs entry is not an object".into()))?;
            let mut entries = obj
                .iter()
                .map(|(tok, lp)| {
                    lp.as_f64()
                        .map(|lp| (tok.clone(), lp.min(0.0)))
                        .ok_or_else(|| BackendError::Malformed(format!("non-numeric logprob for {tok:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            entries.sort_by(|a, b| b.1.total_cmp(&a.1));
            entries.truncate(super::TOP_K);
            TokenDistribution::new(entries, echoed_prompt_hash.to_string())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_wire_format() {
        let v = json!({
            "choices": [{
                "text": " yes",
                "logprobs": {
                    "tokens": [" yes"],
                    "top_logprobs": [{" yes": -0.2, " no": -2.5, " Yes": -4.0}]
                }
            }]
        });
        let d = parse_top_logprobs(&v, "h").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].entries[0], (" yes".to_string(), -0.2));
        assert_eq!(d[0].entries.len(), 3);
    }

    #[test]
    fn missing_block_is_malformed() {
        let v = json!({"choices": [{"text": " yes"}]});
        assert!(matches!(parse_top_logprobs(&v, "h"), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn backoff_grows() {
        for attempt in 1..6 {
            let d = backoff(100, attempt).as_millis() as u64;
            let nominal = 100 * (1 << (attempt - 1));
            assert!(d >= nominal / 2 && d < nominal * 3 / 2, "{attempt}: {d}");
        }
    }
}
