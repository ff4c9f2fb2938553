//! Chat-completion gateway with retries, an in-flight bound, and a
//! record/replay transcript store.
//!
//! In replay mode the gateway never touches a provider: every request is
//! resolved from the transcript store by content hash, which makes every
//! pipeline built on top of it testable offline.

mod http;
mod transcript;

use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ChatCompletionsProvider, API_KEY_VAR, AUTH_HEADER_VAR, ENDPOINT_VAR};
pub use transcript::{transcript_key, RecordedRequest, RecordedResponse, Transcript, TranscriptStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_id: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub request_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    /// Sleep before retry `i` is `backoff[min(i, len - 1)]`.
    #[serde(default = "default_backoff", with = "millis")]
    pub backoff: Vec<Duration>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub transcript_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_retry_limit() -> u32 {
    3
}

fn default_backoff() -> Vec<Duration> {
    vec![
        Duration::from_millis(500),
        Duration::from_secs(2),
        Duration::from_secs(8),
    ]
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Duration], s: S) -> Result<S::Ok, S::Error> {
        let ms: Vec<u64> = v.iter().map(|d| d.as_millis() as u64).collect();
        ms.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Duration>, D::Error> {
        let ms = Vec::<u64>::deserialize(d)?;
        Ok(ms.into_iter().map(Duration::from_millis).collect())
    }
}

impl GatewayConfig {
    pub fn replay(transcript_dir: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            mode: GatewayMode::Replay,
            retry_limit: default_retry_limit(),
            backoff: default_backoff(),
            max_in_flight: default_max_in_flight(),
            transcript_dir: Some(transcript_dir.into()),
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn live() -> Self {
        GatewayConfig {
            mode: GatewayMode::Live,
            transcript_dir: None,
            ..Self::replay("")
        }
    }

    pub fn record(transcript_dir: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            mode: GatewayMode::Record,
            ..Self::replay(transcript_dir)
        }
    }

    fn backoff_for(&self, retry: u32) -> Duration {
        match self.backoff.len() {
            0 => Duration::ZERO,
            n => self.backoff[(retry as usize).min(n - 1)],
        }
    }
}

/// What a provider returned for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderFailure {
    /// Worth retrying (rate limits, 5xx, dropped connections).
    Transient(String),
    Timeout,
    Fatal(String),
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, ProviderFailure>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway misconfigured: {0}")]
    Config(String),
    #[error("no transcript for request {tag:?} (key {key})")]
    ReplayMiss { key: String, tag: String },
    #[error("provider error: {0}")]
    ProviderError(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("transcript store: {0}")]
    Store(#[from] std::io::Error),
}

impl GatewayError {
    /// Errors that indicate the gateway itself cannot work, as opposed to a
    /// single request failing.
    pub fn is_config(&self) -> bool {
        matches!(self, GatewayError::Config(_) | GatewayError::Store(_))
    }
}

/// Counting semaphore bounding concurrent provider calls.
#[derive(Debug)]
struct Admission {
    limit: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(limit: usize) -> Self {
        Admission {
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.limit {
            n = self.released.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        *n -= 1;
        self.0.released.notify_one();
    }
}

/// Shareable across threads; `complete` may be called concurrently.
pub struct Gateway {
    config: GatewayConfig,
    provider: Option<Arc<dyn Provider>>,
    store: Option<TranscriptStore>,
    admission: Admission,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .field("has_provider", &self.provider.is_some())
            .finish()
    }
}

impl Gateway {
    /// Builds a gateway. Live and record modes need a provider; record and
    /// replay modes need a transcript directory.
    pub fn new(config: GatewayConfig, provider: Option<Arc<dyn Provider>>) -> Result<Self, GatewayError> {
        let store = match (config.mode, &config.transcript_dir) {
            (GatewayMode::Live, _) => None,
            (GatewayMode::Record, Some(dir)) => Some(TranscriptStore::open(dir)?),
            (GatewayMode::Replay, Some(dir)) => Some(TranscriptStore::open_existing(dir)?),
            (mode, None) => {
                return Err(GatewayError::Config(format!(
                    "{mode:?} mode requires a transcript directory"
                )))
            }
        };
        let provider = match config.mode {
            GatewayMode::Replay => None,
            _ => Some(
                provider.ok_or_else(|| GatewayError::Config(format!("{:?} mode requires a provider", config.mode)))?,
            ),
        };
        Ok(Gateway {
            admission: Admission::new(config.max_in_flight),
            config,
            provider,
            store,
        })
    }

    /// Live/record gateway talking to the provider configured in the
    /// environment.
    pub fn from_env(config: GatewayConfig) -> Result<Self, GatewayError> {
        let provider: Option<Arc<dyn Provider>> = match config.mode {
            GatewayMode::Replay => None,
            _ => Some(Arc::new(
                ChatCompletionsProvider::from_env(Duration::from_secs(config.timeout_secs))
                    .map_err(GatewayError::Config)?,
            )),
        };
        Self::new(config, provider)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn store(&self) -> Option<&TranscriptStore> {
        self.store.as_ref()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if request.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        if request.temperature.is_nan() || request.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }

        let started = Instant::now();
        if self.config.mode == GatewayMode::Replay {
            let key = transcript_key(request);
            let store = self.store.as_ref().expect("replay gateway has a store");
            return match store.load(&key)? {
                Some(t) => Ok(CompletionResponse {
                    text: t.response.text,
                    attempts: 1,
                    latency: started.elapsed(),
                    truncated: t.response.truncated,
                }),
                None => Err(GatewayError::ReplayMiss {
                    key,
                    tag: request.request_tag.clone(),
                }),
            };
        }

        let provider = self.provider.as_ref().expect("live gateway has a provider");
        let mut attempts = 0;
        let reply = loop {
            attempts += 1;
            let outcome = {
                let _permit = self.admission.acquire();
                provider.complete(request)
            };
            match outcome {
                Ok(reply) => break reply,
                Err(ProviderFailure::Fatal(msg)) => return Err(GatewayError::ProviderError(msg)),
                Err(failure) => {
                    let retries_used = attempts - 1;
                    if retries_used >= self.config.retry_limit {
                        return Err(match failure {
                            ProviderFailure::Timeout => GatewayError::Timeout { attempts },
                            ProviderFailure::Transient(last) => GatewayError::RetriesExhausted { attempts, last },
                            ProviderFailure::Fatal(_) => unreachable!(),
                        });
                    }
                    log::warn!(
                        "request {} attempt {attempts} failed ({failure:?}); retrying",
                        request.request_tag
                    );
                    thread::sleep(self.config.backoff_for(retries_used));
                }
            }
        };

        if let (GatewayMode::Record, Some(store)) = (self.config.mode, &self.store) {
            store.save(&Transcript::new(request, reply.text.clone(), reply.truncated))?;
        }
        Ok(CompletionResponse {
            text: reply.text,
            attempts,
            latency: started.elapsed(),
            truncated: reply.truncated,
        })
    }
}

/// Test providers for exercising pipelines without a network.
pub mod testing {
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};
    use std::sync::Mutex;
    use std::time::Duration;

    use super::{CompletionRequest, Provider, ProviderFailure, ProviderReply};

    /// Answers by request tag. Unknown tags fail fatally.
    #[derive(Debug, Default)]
    pub struct ScriptedProvider {
        responses: HashMap<String, String>,
        calls: AtomicUsize,
    }

    impl ScriptedProvider {
        pub fn new() -> Self {
            Self::default()
        }

        pub fn with(mut self, tag: impl Into<String>, text: impl Into<String>) -> Self {
            self.responses.insert(tag.into(), text.into());
            self
        }

        pub fn insert(&mut self, tag: impl Into<String>, text: impl Into<String>) {
            self.responses.insert(tag.into(), text.into());
        }

        pub fn calls(&self) -> usize {
            self.calls.load(Ordering::SeqCst)
        }
    }

    impl Provider for ScriptedProvider {
        fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, ProviderFailure> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.responses
                .get(&request.request_tag)
                .map(|text| ProviderReply {
                    text: text.clone(),
                    truncated: false,
                })
                .ok_or_else(|| ProviderFailure::Fatal(format!("no script for {}", request.request_tag)))
        }
    }

    /// Fails transiently `failures` times, then echoes the prompt.
    #[derive(Debug)]
    pub struct FlakyProvider {
        remaining_failures: AtomicU32,
        failure: ProviderFailure,
    }

    impl FlakyProvider {
        pub fn new(failures: u32) -> Self {
            FlakyProvider {
                remaining_failures: AtomicU32::new(failures),
                failure: ProviderFailure::Transient("simulated outage".into()),
            }
        }

        pub fn timing_out(failures: u32) -> Self {
            FlakyProvider {
                remaining_failures: AtomicU32::new(failures),
                failure: ProviderFailure::Timeout,
            }
        }
    }

    impl Provider for FlakyProvider {
        fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, ProviderFailure> {
            let left = self.remaining_failures.load(Ordering::SeqCst);
            if left > 0 {
                self.remaining_failures.store(left - 1, Ordering::SeqCst);
                return Err(self.failure.clone());
            }
            Ok(ProviderReply {
                text: format!("echo: {}", request.prompt),
                truncated: false,
            })
        }
    }

    /// Sleeps for a fixed time and tracks the peak number of concurrent calls.
    #[derive(Debug)]
    pub struct SlowProvider {
        delay: Duration,
        current: AtomicUsize,
        peak: Mutex<usize>,
    }

    impl SlowProvider {
        pub fn new(delay: Duration) -> Self {
            SlowProvider {
                delay,
                current: AtomicUsize::new(0),
                peak: Mutex::new(0),
            }
        }

        pub fn peak(&self) -> usize {
            *self.peak.lock().unwrap()
        }
    }

    impl Provider for SlowProvider {
        fn complete(&self, request: &CompletionRequest) -> Result<ProviderReply, ProviderFailure> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            {
                let mut peak = self.peak.lock().unwrap();
                *peak = (*peak).max(now);
            }
            std::thread::sleep(self.delay);
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(ProviderReply {
                text: request.request_tag.clone(),
                truncated: false,
            })
        }
    }
}
