//! Chat-completions dispatch: retries with backoff, a per-minute request
//! budget, bounded concurrency and a content-addressed record/replay cache.

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::ChatMessage;
use crate::store::{sha256_hex, ContentStore};

pub const ENDPOINT_URL_VAR: &str = "ABSA_ENDPOINT_URL";
pub const API_KEY_VAR: &str = "ABSA_API_KEY";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClientError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    #[error("{0} mode needs a cache directory")]
    NoCache(Mode),
    #[error("no recorded completion for request {digest}")]
    ReplayMiss { digest: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, status: Option<u16>, last: String },
    #[error("endpoint answered {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed endpoint response: {0}")]
    Malformed(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(format!("unknown client mode {other:?} (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self { model_id: model_id.into(), messages, temperature: 0.0, max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS }
    }

    /// SHA-256 over model, messages and temperature. The output-token cap is
    /// deliberately left out.
    pub fn digest(&self) -> String {
        let input = DigestInput { model: &self.model_id, messages: &self.messages, temperature: self.temperature };
        sha256_hex(&serde_json::to_vec(&input).expect("request serializes"))
    }

    fn wire_body(&self) -> String {
        serde_json::to_string(&WireRequest {
            model: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
            max_tokens: self.max_output_tokens,
        })
        .expect("request serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub request_digest: String,
    pub response_text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    pub endpoint_id: String,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    request: CompletionRequest,
    record: CompletionRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP seam so tests can inject failures without a network.
/// `Err` means the request never produced a status (connect error, timeout).
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse, String>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ClientError::Malformed(format!("http client setup: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &str) -> Result<HttpResponse, String> {
        let mut request = self.client.post(url).header("content-type", "application/json").body(body.to_string());
        if let Some(key) = bearer {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    /// Reads the endpoint from the environment. The key is optional so that
    /// unauthenticated local servers work.
    pub fn from_env() -> Result<Self, ClientError> {
        Self::from_env_var(ENDPOINT_URL_VAR)
    }

    pub fn from_env_var(url_var: &'static str) -> Result<Self, ClientError> {
        let url =
            std::env::var(url_var).ok().filter(|v| !v.trim().is_empty()).ok_or(ClientError::MissingEnv(url_var))?;
        let api_key = std::env::var(API_KEY_VAR).ok().filter(|v| !v.is_empty());
        Ok(Self { url, api_key })
    }

    /// The URL without query string, safe to log and to store in records.
    pub fn id(&self) -> String {
        self.url.split('?').next().unwrap_or_default().to_string()
    }
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    /// Exponential backoff with jitter in [50%, 100%] of the nominal delay.
    pub fn delay(&self, attempt: u32) -> Duration {
        let nominal = self.base_delay.saturating_mul(1u32 << attempt.saturating_sub(1).min(16)).min(self.max_delay);
        nominal.mul_f64(rand::rng().random_range(0.5..=1.0))
    }
}

pub fn is_transient(status: u16) -> bool {
    matches!(status, 408 | 425 | 429 | 500..=599)
}

/// Sliding-window request budget shared by all workers of a client.
#[derive(Debug)]
pub struct RateLimiter {
    limit: Option<usize>,
    window: Duration,
    sent: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(limit: Option<u32>) -> Self {
        Self::new(limit.map(|l| l as usize), Duration::from_secs(60))
    }

    pub fn new(limit: Option<usize>, window: Duration) -> Self {
        Self { limit: limit.filter(|&l| l > 0), window, sent: Mutex::new(VecDeque::new()) }
    }

    pub fn acquire(&self) {
        let Some(limit) = self.limit else { return };
        loop {
            let wait = {
                let mut sent = self.sent.lock().unwrap_or_else(|e| e.into_inner());
                let now = Instant::now();
                while sent.front().is_some_and(|&t| now.duration_since(t) >= self.window) {
                    sent.pop_front();
                }
                if sent.len() < limit {
                    sent.push_back(now);
                    return;
                }
                self.window - now.duration_since(sent[0])
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub mode: Mode,
    pub endpoint: Option<Endpoint>,
    /// Completions live under `<cache_dir>/completions`.
    pub cache_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub requests_per_minute: Option<u32>,
}

impl ClientConfig {
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: Mode::Replay,
            endpoint: None,
            cache_dir: Some(cache_dir.into()),
            retry: RetryPolicy::default(),
            requests_per_minute: None,
        }
    }
}

pub struct CompletionClient {
    mode: Mode,
    endpoint: Option<Endpoint>,
    transport: Option<Arc<dyn Transport>>,
    cache: Option<ContentStore>,
    retry: RetryPolicy,
    limiter: RateLimiter,
}

impl CompletionClient {
    /// Live and record modes need an endpoint and a transport; replay and
    /// record modes need a cache directory.
    pub fn new(config: ClientConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, ClientError> {
        if config.mode != Mode::Live && config.cache_dir.is_none() {
            return Err(ClientError::NoCache(config.mode));
        }
        if config.mode != Mode::Replay && (config.endpoint.is_none() || transport.is_none()) {
            return Err(ClientError::MissingEnv(ENDPOINT_URL_VAR));
        }
        Ok(Self {
            mode: config.mode,
            endpoint: config.endpoint,
            transport,
            cache: config.cache_dir.map(|d| ContentStore::new(d.join("completions"))),
            retry: config.retry,
            limiter: RateLimiter::per_minute(config.requests_per_minute),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn endpoint_id(&self) -> Option<String> {
        self.endpoint.as_ref().map(Endpoint::id)
    }

    /// Digests with no cache entry; used to fail a replay run up front.
    pub fn missing(&self, requests: &[CompletionRequest]) -> Vec<String> {
        let Some(cache) = &self.cache else {
            return requests.iter().map(CompletionRequest::digest).collect();
        };
        let mut missing: Vec<String> = requests.iter().map(|r| r.digest()).filter(|d| !cache.contains(d)).collect();
        missing.dedup();
        missing
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord, ClientError> {
        let digest = request.digest();
        match self.mode {
            Mode::Replay => self.lookup(&digest)?.ok_or(ClientError::ReplayMiss { digest }),
            Mode::Record => {
                if let Some(hit) = self.lookup(&digest)? {
                    return Ok(hit);
                }
                let record = self.send(request, digest)?;
                self.persist(request, &record)?;
                Ok(record)
            }
            Mode::Live => self.send(request, digest),
        }
    }

    /// Runs `requests` on at most `max_in_flight` worker threads. Results come
    /// back in input order; identical requests are sent once.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
        max_in_flight: usize,
    ) -> Vec<Result<CompletionRecord, ClientError>> {
        let digests: Vec<String> = requests.iter().map(CompletionRequest::digest).collect();
        let mut first_of: HashMap<&str, usize> = HashMap::new();
        let mut unique = Vec::new();
        for (i, d) in digests.iter().enumerate() {
            first_of.entry(d).or_insert_with(|| {
                unique.push(i);
                unique.len() - 1
            });
        }

        let next = AtomicUsize::new(0);
        let done = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<CompletionRecord, ClientError>>>> = Mutex::new(vec![None; unique.len()]);
        let workers = max_in_flight.max(1).min(unique.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let slot = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&index) = unique.get(slot) else { break };
                    let result = self.complete(&requests[index]);
                    if let Err(e) = &result {
                        log::warn!("request {} failed: {e}", digests[index]);
                    }
                    results.lock().unwrap_or_else(|e| e.into_inner())[slot] = Some(result);
                    let finished = done.fetch_add(1, Ordering::SeqCst) + 1;
                    if finished.is_multiple_of(50) || finished == unique.len() {
                        log::info!("completed {finished}/{} requests", unique.len());
                    }
                });
            }
        });
        let results = results.into_inner().unwrap_or_else(|e| e.into_inner());
        digests.iter().map(|d| results[first_of[d.as_str()]].clone().expect("every slot is filled")).collect()
    }

    fn lookup(&self, digest: &str) -> Result<Option<CompletionRecord>, ClientError> {
        let cache = self.cache.as_ref().ok_or(ClientError::NoCache(self.mode))?;
        let Some(bytes) = cache.read(digest).map_err(|e| ClientError::Cache(e.to_string()))? else {
            return Ok(None);
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes)
            .map_err(|e| ClientError::Cache(format!("{}: {e}", cache.path_for(digest).display())))?;
        if entry.record.request_digest != digest {
            return Err(ClientError::Cache(format!("{} holds digest {}", digest, entry.record.request_digest)));
        }
        Ok(Some(CompletionRecord { latency_ms: 0, attempt_count: 0, ..entry.record }))
    }

    fn persist(&self, request: &CompletionRequest, record: &CompletionRecord) -> Result<(), ClientError> {
        let cache = self.cache.as_ref().ok_or(ClientError::NoCache(self.mode))?;
        let entry = CacheEntry { request: request.clone(), record: record.clone() };
        let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        cache.write(&record.request_digest, &bytes).map_err(|e| ClientError::Cache(e.to_string()))
    }

    fn send(&self, request: &CompletionRequest, digest: String) -> Result<CompletionRecord, ClientError> {
        let endpoint = self.endpoint.as_ref().ok_or(ClientError::MissingEnv(ENDPOINT_URL_VAR))?;
        let transport = self.transport.as_ref().ok_or(ClientError::MissingEnv(ENDPOINT_URL_VAR))?;
        let body = request.wire_body();
        let started = Instant::now();
        let response = with_retries(&self.retry, &self.limiter, || {
            transport.post_json(&endpoint.url, endpoint.api_key.as_deref(), &body)
        })?;
        let (attempts, body) = response;
        Ok(CompletionRecord {
            request_digest: digest,
            response_text: extract_content(&body)?,
            latency_ms: started.elapsed().as_millis() as u64,
            attempt_count: attempts,
            endpoint_id: endpoint.id(),
        })
    }
}

/// Calls `send` until it yields a 2xx response, retrying transient statuses
/// and network errors. Returns the attempt count and the response body.
pub fn with_retries(
    policy: &RetryPolicy,
    limiter: &RateLimiter,
    mut send: impl FnMut() -> Result<HttpResponse, String>,
) -> Result<(u32, String), ClientError> {
    let max_attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        attempt += 1;
        limiter.acquire();
        let (status, last) = match send() {
            Ok(r) if (200..300).contains(&r.status) => return Ok((attempt, r.body)),
            Ok(r) if is_transient(r.status) => (Some(r.status), format!("status {}: {}", r.status, snippet(&r.body))),
            Ok(r) => return Err(ClientError::Http { status: r.status, body: snippet(&r.body) }),
            Err(e) => (None, e),
        };
        if attempt >= max_attempts {
            return Err(ClientError::Exhausted { attempts: attempt, status, last });
        }
        let delay = policy.delay(attempt);
        log::debug!("attempt {attempt} failed ({last}); retrying in {delay:?}");
        std::thread::sleep(delay);
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(300).collect()
}

fn extract_content(body: &str) -> Result<String, ClientError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ClientError::Malformed(format!("{e}: {}", snippet(body))))?;
    if let Some(usage) = value.get("usage") {
        log::debug!("usage: {usage}");
    }
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| ClientError::Malformed(format!("no choices[0].message.content in {}", snippet(body))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Role;

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest::new("m", vec![ChatMessage { role: Role::User, content: text.into() }])
    }

    #[test]
    fn digest_ignores_token_cap_but_not_model() {
        let a = request("hi");
        let mut b = a.clone();
        b.max_output_tokens = 7;
        assert_eq!(a.digest(), b.digest());
        b.model_id = "other".into();
        assert_ne!(a.digest(), b.digest());
        let mut c = a.clone();
        c.temperature = 0.5;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn wire_body_shape() {
        let body: serde_json::Value = serde_json::from_str(&request("hi").wire_body()).unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 512);
    }

    #[test]
    fn content_extraction() {
        assert_eq!(extract_content(r#"{"choices":[{"message":{"content":"[]"}}]}"#).unwrap(), "[]");
        assert!(matches!(extract_content("{}"), Err(ClientError::Malformed(_))));
        assert!(matches!(extract_content("not json"), Err(ClientError::Malformed(_))));
    }

    #[test]
    fn transient_statuses() {
        assert!(is_transient(429) && is_transient(503) && is_transient(408));
        assert!(!is_transient(400) && !is_transient(401) && !is_transient(404));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 9,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert!(p.delay(1) <= Duration::from_millis(100) && p.delay(1) >= Duration::from_millis(50));
        assert!(p.delay(2) >= Duration::from_millis(100));
        assert!(p.delay(8) <= Duration::from_millis(350));
    }

    #[test]
    fn rate_limiter_blocks_past_budget() {
        let limiter = RateLimiter::new(Some(2), Duration::from_millis(80));
        let start = Instant::now();
        for _ in 0..3 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(70));
    }

    #[test]
    fn mode_requirements() {
        let live = ClientConfig { mode: Mode::Live, ..ClientConfig::replay("x") };
        assert!(matches!(CompletionClient::new(live, None), Err(ClientError::MissingEnv(_))));
        let replay = ClientConfig { cache_dir: None, ..ClientConfig::replay("x") };
        assert!(matches!(CompletionClient::new(replay, None), Err(ClientError::NoCache(Mode::Replay))));
    }
}
