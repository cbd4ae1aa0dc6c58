//! Uniform access to text-completion providers.
//!
//! Each registered provider gets its own [`RateLimiter`] sized from its
//! requests-per-minute budget. Transient failures (timeouts, 429s, 5xx and
//! transport errors) are retried with exponential backoff plus jitter; 4xx
//! responses are terminal. Every call to [`Gateway::complete`] yields exactly
//! one [`CompletionRecord`], successful or not.

#[cfg(feature = "http")]
mod http;
mod limiter;
mod mock;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::assessment::PromptDocument;
use crate::clock::Clock;

#[cfg(feature = "http")]
pub use http::HttpChatAdapter;
pub use limiter::RateLimiter;
pub use mock::{MockBehavior, MockProvider, MockReply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// OpenAI-style `POST {endpoint}` chat-completion request.
    #[default]
    HttpChat,
    Mock,
}

/// One provider entry. `auth_env` names the environment variable holding the
/// API key; the key itself never appears in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub provider_id: String,
    #[serde(default)]
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    pub rpm_limit: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Sampling temperature passed to chat adapters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f32>,
    /// Behavior of `kind = "mock"` providers loaded from a registry file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockBehavior>,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_retries() -> u32 {
    3
}

pub const MAX_RETRIES_CEILING: u32 = 10;

impl ProviderConfig {
    /// `provider/model`, the identifier results are keyed by.
    pub fn source_id(&self) -> String {
        format!("{}/{}", self.provider_id, self.model_name)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::InvalidConfig(m));
        let id_ok = !self.provider_id.is_empty()
            && self
                .provider_id
                .bytes()
                .all(|b| b.is_ascii_alphanumeric() || b"-_.".contains(&b));
        if !id_ok {
            return bad(format!(
                "provider_id {:?} must be [A-Za-z0-9._-]+",
                self.provider_id
            ));
        }
        if self.model_name.trim().is_empty() {
            return bad(format!("{}: model_name is empty", self.provider_id));
        }
        if self.rpm_limit == 0 {
            return bad(format!(
                "{}: rpm_limit must be at least 1",
                self.provider_id
            ));
        }
        if self.timeout_secs == 0 {
            return bad(format!(
                "{}: timeout_secs must be positive",
                self.provider_id
            ));
        }
        if self.max_retries > MAX_RETRIES_CEILING {
            return bad(format!(
                "{}: max_retries {} exceeds {MAX_RETRIES_CEILING}",
                self.provider_id, self.max_retries
            ));
        }
        if let Some(env) = &self.auth_env {
            let ok = !env.is_empty()
                && env
                    .bytes()
                    .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_');
            if !ok {
                return bad(format!(
                    "{}: auth_env must name an environment variable (A-Z, 0-9, _)",
                    self.provider_id
                ));
            }
        }
        if self.kind == ProviderKind::HttpChat
            && !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://"))
        {
            return bad(format!(
                "{}: endpoint must be an http(s) URL",
                self.provider_id
            ));
        }
        Ok(())
    }
}

/// Registry file: a list of `[[providers]]` tables, secrets excluded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderRegistry {
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
}

impl ProviderRegistry {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let reg: ProviderRegistry =
            toml::from_str(text).map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        for p in &reg.providers {
            p.validate()?;
        }
        Ok(reg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            GatewayError::InvalidConfig(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }
}

/// Transport-level failure reported by an adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TransportError {
    Timeout,
    RateLimited,
    Server { status: u16, message: String },
    Client { status: u16, message: String },
    Network { message: String },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, TransportError::Client { .. })
    }

    fn outcome(&self) -> Outcome {
        match self {
            TransportError::Timeout => Outcome::Timeout,
            TransportError::RateLimited => Outcome::RateLimited,
            _ => Outcome::HttpError,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout => write!(f, "timed out"),
            TransportError::RateLimited => write!(f, "rate limited by provider"),
            TransportError::Server { status, message } => {
                write!(f, "server error {status}: {message}")
            }
            TransportError::Client { status, message } => {
                write!(f, "client error {status}: {message}")
            }
            TransportError::Network { message } => write!(f, "network error: {message}"),
        }
    }
}

/// Maps one prompt onto one provider wire call.
pub trait ProviderAdapter: Send + Sync {
    fn send(
        &self,
        config: &ProviderConfig,
        prompt: &PromptDocument,
    ) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Timeout,
    HttpError,
    RateLimited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub provider_id: String,
    pub model_name: String,
    pub prompt_hash: String,
    pub raw_output: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub outcome: Outcome,
    /// When each attempt was dispatched.
    pub dispatched_at: Vec<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("provider {0} is already registered")]
    DuplicateProvider(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("unknown provider {0}")]
    UnknownProvider(String),
    #[error("rate budget of {provider} exhausted: next slot in {wait:?}")]
    RateBudgetExhausted { provider: String, wait: Duration },
    #[error("provider {} failed after {} attempt(s): {}", .record.provider_id, .record.attempt_count, .record.error.as_deref().unwrap_or("unknown error"))]
    Provider { record: Box<CompletionRecord> },
}

#[derive(Debug, Clone)]
pub struct GatewaySettings {
    /// Longest a caller may be queued behind the rate limiter.
    pub max_queue_wait: Duration,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub jitter_seed: u64,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            max_queue_wait: Duration::from_secs(15 * 60),
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(30),
            jitter_seed: 0x5eed,
        }
    }
}

struct Provider {
    config: ProviderConfig,
    adapter: Arc<dyn ProviderAdapter>,
    limiter: RateLimiter,
    rng: Mutex<StdRng>,
}

pub struct Gateway {
    providers: RwLock<BTreeMap<String, Arc<Provider>>>,
    clock: Arc<dyn Clock>,
    settings: GatewaySettings,
    log: Mutex<Vec<CompletionRecord>>,
}

impl Gateway {
    pub fn new(clock: Arc<dyn Clock>, settings: GatewaySettings) -> Self {
        Self {
            providers: RwLock::new(BTreeMap::new()),
            clock,
            settings,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Register a provider whose adapter follows from its `kind`.
    pub fn register_provider(&self, config: ProviderConfig) -> Result<String, GatewayError> {
        let adapter: Arc<dyn ProviderAdapter> = match config.kind {
            ProviderKind::Mock => Arc::new(MockProvider::new(
                config.mock.clone().unwrap_or(MockBehavior::FullMarks),
            )),
            #[cfg(feature = "http")]
            ProviderKind::HttpChat => Arc::new(HttpChatAdapter::new()),
            #[cfg(not(feature = "http"))]
            ProviderKind::HttpChat => {
                return Err(GatewayError::InvalidConfig(
                    "built without the `http` feature".to_string(),
                ))
            }
        };
        self.register_with_adapter(config, adapter)
    }

    pub fn register_with_adapter(
        &self,
        config: ProviderConfig,
        adapter: Arc<dyn ProviderAdapter>,
    ) -> Result<String, GatewayError> {
        config.validate()?;
        let mut providers = self.providers.write().unwrap();
        if providers.contains_key(&config.provider_id) {
            return Err(GatewayError::DuplicateProvider(config.provider_id));
        }
        let id = config.provider_id.clone();
        let seed = self.settings.jitter_seed ^ crate::util::fnv1a(id.as_bytes());
        providers.insert(
            id.clone(),
            Arc::new(Provider {
                limiter: RateLimiter::per_minute(config.rpm_limit),
                config,
                adapter,
                rng: Mutex::new(StdRng::seed_from_u64(seed)),
            }),
        );
        Ok(id)
    }

    pub fn provider_config(&self, provider_id: &str) -> Option<ProviderConfig> {
        self.providers
            .read()
            .unwrap()
            .get(provider_id)
            .map(|p| p.config.clone())
    }

    pub fn provider_ids(&self) -> Vec<String> {
        self.providers.read().unwrap().keys().cloned().collect()
    }

    /// All completion records produced so far, in completion order.
    pub fn records(&self) -> Vec<CompletionRecord> {
        self.log.lock().unwrap().clone()
    }

    fn backoff(&self, provider: &Provider, attempt: u32) -> Duration {
        let exp = self
            .settings
            .backoff_base
            .saturating_mul(1u32 << (attempt - 1).min(16))
            .min(self.settings.backoff_cap);
        let jitter_ms = exp.as_millis() as u64 / 2;
        let jitter = if jitter_ms == 0 {
            0
        } else {
            provider.rng.lock().unwrap().gen_range(0..=jitter_ms)
        };
        exp + Duration::from_millis(jitter)
    }

    pub fn complete(
        &self,
        provider_id: &str,
        prompt: &PromptDocument,
    ) -> Result<CompletionRecord, GatewayError> {
        let provider = self
            .providers
            .read()
            .unwrap()
            .get(provider_id)
            .cloned()
            .ok_or_else(|| GatewayError::UnknownProvider(provider_id.to_string()))?;
        let cfg = &provider.config;
        let mut record = CompletionRecord {
            provider_id: cfg.provider_id.clone(),
            model_name: cfg.model_name.clone(),
            prompt_hash: prompt.hash(),
            raw_output: String::new(),
            latency_ms: 0,
            attempt_count: 0,
            outcome: Outcome::Ok,
            dispatched_at: Vec::new(),
            error: None,
        };

        let result = loop {
            let slot = match provider
                .limiter
                .reserve(self.clock.now(), self.settings.max_queue_wait)
            {
                Ok(slot) => slot,
                Err(wait) => {
                    break Err(GatewayError::RateBudgetExhausted {
                        provider: cfg.provider_id.clone(),
                        wait,
                    })
                }
            };
            self.clock.sleep_until(slot);
            record.attempt_count += 1;
            record.dispatched_at.push(slot);

            match provider.adapter.send(cfg, prompt) {
                Ok(text) => {
                    record.raw_output = text;
                    record.outcome = Outcome::Ok;
                    record.error = None;
                    break Ok(());
                }
                Err(e) => {
                    record.outcome = e.outcome();
                    record.error = Some(e.to_string());
                    if !e.is_retryable() || record.attempt_count > cfg.max_retries {
                        break Err(GatewayError::Provider {
                            record: Box::new(record.clone()),
                        });
                    }
                    log::warn!(
                        "{}: attempt {} failed ({e}), retrying",
                        cfg.provider_id,
                        record.attempt_count
                    );
                    let delay = self.backoff(&provider, record.attempt_count);
                    self.clock.sleep(delay);
                }
            }
        };

        if let Some(first) = record.dispatched_at.first() {
            record.latency_ms = (self.clock.now() - *first).num_milliseconds().max(0) as u64;
        }
        match result {
            Ok(()) => {
                self.log.lock().unwrap().push(record.clone());
                Ok(record)
            }
            Err(GatewayError::Provider { .. }) => {
                self.log.lock().unwrap().push(record.clone());
                Err(GatewayError::Provider {
                    record: Box::new(record),
                })
            }
            Err(e) => {
                if record.attempt_count > 0 {
                    self.log.lock().unwrap().push(record);
                }
                Err(e)
            }
        }
    }
}
