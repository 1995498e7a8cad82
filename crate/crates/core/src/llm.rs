//! Completion backends: a live JSON-over-HTTP client for hosted models and a
//! deterministic scripted mock for offline runs, plus the session layer that
//! records every exchange into an auditable transcript.

use std::collections::HashMap;
use std::env;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default completion budget per call.
pub const DEFAULT_MAX_TOKENS: u32 = 256;

/// Environment variables consumed by [`HttpCompletionBackend::from_env`].
pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";
pub const ENV_MODEL: &str = "LLM_MODEL";

/// One completion call: prompt, stop sequences, decoding limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub stop_sequences: Vec<String>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl CompletionRequest {
    /// A request with the deterministic defaults: stop at the first newline,
    /// at most [`DEFAULT_MAX_TOKENS`] tokens, temperature 0.
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            stop_sequences: vec!["\n".into()],
            max_tokens: DEFAULT_MAX_TOKENS,
            temperature: 0.0,
        }
    }

    pub fn with_stop(mut self, stop_sequences: Vec<String>) -> Self {
        self.stop_sequences = stop_sequences;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        debug_assert!(max_tokens > 0);
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        debug_assert!(temperature >= 0.0);
        self.temperature = temperature;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ToModel,
    FromModel,
}

/// One prompt or completion in a session. `timestamp` is a logical clock
/// (the turn ordinal), not wall time, so persisted transcripts are
/// byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub direction: Direction,
    pub text: String,
    pub timestamp: u64,
}

/// Append-only record of the prompt/completion exchange for one example.
/// The first turn is always to the model, and every reply is preceded by
/// exactly one prompt.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    turns: Vec<Turn>,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    fn push(&mut self, direction: Direction, text: impl Into<String>) {
        self.turns.push(Turn {
            direction,
            text: text.into(),
            timestamp: self.turns.len() as u64,
        });
    }

    /// Records one prompt/reply pair.
    pub fn record_exchange(&mut self, prompt: &str, reply: &str) {
        self.push(Direction::ToModel, prompt);
        self.push(Direction::FromModel, reply);
    }

    /// Human-readable rendering, one header line per turn.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            let tag = match turn.direction {
                Direction::ToModel => "to model",
                Direction::FromModel => "from model",
            };
            out.push_str(&format!("=== turn {:03} ({tag}) ===\n", turn.timestamp));
            out.push_str(&turn.text);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    /// Transient failure; retried with exponential backoff.
    #[error("transport error: {0}")]
    Transport(String),
    /// The backend answered but refused or mangled the request; not retried.
    #[error("backend refusal: {0}")]
    Refusal(String),
    /// The scripted mock had no pattern matching the prompt.
    #[error("no script entry matches the prompt (tail: {tail:?})")]
    NoScriptMatch { tail: String },
}

/// Retry schedule for transport errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            max_backoff: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    /// No retries, no sleeping; used by tests and mocks.
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            initial_backoff: Duration::ZERO,
            max_backoff: Duration::ZERO,
        }
    }
}

/// A text-completion service. Implementations return the raw model text;
/// stop-sequence truncation and transcript bookkeeping live in [`Session`].
pub trait Backend: Send + Sync {
    fn raw_complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;

    /// Short descriptor for run fingerprints (e.g. `mock:script` or a model
    /// name).
    fn describe(&self) -> String;

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::default()
    }
}

/// One example's exchange with a backend. Owns the transcript.
pub struct Session<'a> {
    backend: &'a dyn Backend,
    transcript: Transcript,
}

impl<'a> Session<'a> {
    pub fn new(backend: &'a dyn Backend) -> Self {
        Session {
            backend,
            transcript: Transcript::new(),
        }
    }

    /// Runs one completion: retries transport errors per the backend's
    /// policy, truncates the reply at the first stop sequence (stop
    /// excluded; a missing stop is not an error), and appends both turns to
    /// the transcript.
    pub fn complete(&mut self, request: &CompletionRequest) -> Result<String, LlmError> {
        let policy = self.backend.retry_policy();
        let mut backoff = policy.initial_backoff;
        let mut attempt = 0;
        let raw = loop {
            match self.backend.raw_complete(request) {
                Ok(text) => break text,
                Err(LlmError::Transport(message)) => {
                    if attempt >= policy.max_retries {
                        return Err(LlmError::Transport(message));
                    }
                    attempt += 1;
                    thread::sleep(backoff);
                    backoff = (backoff * 2).min(policy.max_backoff);
                }
                Err(other) => return Err(other),
            }
        };
        let reply = truncate_at_stop(&raw, &request.stop_sequences).to_string();
        self.transcript.record_exchange(&request.prompt, &reply);
        Ok(reply)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn into_transcript(self) -> Transcript {
        self.transcript
    }
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
fn truncate_at_stop<'t>(text: &'t str, stops: &[String]) -> &'t str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Entry of a mock script: a prompt-suffix pattern and its canned reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub pattern: String,
    pub reply: String,
}

/// Deterministic offline backend: answers with the reply of the longest
/// pattern that is a suffix of the prompt. Registration order does not
/// matter except that re-registering an identical pattern replaces it.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    entries: Vec<ScriptEntry>,
    label: String,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        ScriptedBackend {
            entries: Vec::new(),
            label: "mock".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn add(&mut self, pattern: impl Into<String>, reply: impl Into<String>) {
        let pattern = pattern.into();
        let reply = reply.into();
        match self.entries.iter_mut().find(|e| e.pattern == pattern) {
            Some(entry) => entry.reply = reply,
            None => self.entries.push(ScriptEntry { pattern, reply }),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut backend = ScriptedBackend::new();
        for (pattern, reply) in entries {
            backend.add(pattern, reply);
        }
        backend
    }

    /// Loads a script from a JSON array of `{"pattern": ..., "reply": ...}`
    /// objects.
    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self, LlmError> {
        let entries: Vec<ScriptEntry> = serde_json::from_reader(reader)
            .map_err(|e| LlmError::Refusal(format!("malformed mock script: {e}")))?;
        Ok(ScriptedBackend::from_entries(
            entries.into_iter().map(|e| (e.pattern, e.reply)),
        ))
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let file = File::open(&path)
            .map_err(|e| LlmError::Refusal(format!("cannot open mock script: {e}")))?;
        Ok(Self::from_json_reader(file)?
            .with_label(format!("mock:{}", path.as_ref().display())))
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }
}

/// Builds a scripted mock backend from `(pattern, reply)` pairs.
pub fn scripted_mock(script: impl IntoIterator<Item = (String, String)>) -> ScriptedBackend {
    ScriptedBackend::from_entries(script)
}

impl Backend for ScriptedBackend {
    fn raw_complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.entries
            .iter()
            .filter(|e| request.prompt.ends_with(&e.pattern))
            .max_by_key(|e| e.pattern.len())
            .map(|e| e.reply.clone())
            .ok_or_else(|| {
                let tail: String = request
                    .prompt
                    .chars()
                    .rev()
                    .take(40)
                    .collect::<Vec<_>>()
                    .into_iter()
                    .rev()
                    .collect();
                LlmError::NoScriptMatch { tail }
            })
    }

    fn describe(&self) -> String {
        self.label.clone()
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::none()
    }
}

/// Closure-backed backend for tests.
pub struct FnBackend<F>(pub F);

impl<F> Backend for FnBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn raw_complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        (self.0)(request)
    }

    fn describe(&self) -> String {
        "fn".into()
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy::none()
    }
}

/// Which request/response JSON shape the endpoint speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `POST {base}/chat/completions` with a messages array; the few-shot
    /// block travels as one flat user message.
    Chat,
    /// `POST {base}/completions` with a plain prompt string.
    Completion,
}

/// Configuration for the live HTTP backend.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: String,
    pub style: ApiStyle,
    /// Upper bound on in-flight requests across threads.
    pub max_concurrent: usize,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

/// Thin JSON-over-HTTP adapter for hosted chat/completion endpoints. All
/// pipeline logic lives above it.
pub struct HttpCompletionBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    limiter: Limiter,
}

impl HttpCompletionBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let limiter = Limiter::new(config.max_concurrent.max(1));
        Ok(HttpCompletionBackend {
            config,
            client,
            limiter,
        })
    }

    /// Reads `LLM_API_KEY`, `LLM_BASE_URL`, and `LLM_MODEL`.
    pub fn from_env(style: ApiStyle) -> Result<Self, LlmError> {
        let get = |name: &str| {
            env::var(name).map_err(|_| {
                LlmError::Refusal(format!("environment variable {name} is not set"))
            })
        };
        Self::new(HttpBackendConfig {
            base_url: get(ENV_BASE_URL)?,
            model: get(ENV_MODEL)?,
            api_key: get(ENV_API_KEY)?,
            style,
            max_concurrent: 1,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(120),
        })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.style {
            ApiStyle::Chat => format!("{base}/chat/completions"),
            ApiStyle::Completion => format!("{base}/completions"),
        }
    }

    fn request_body(&self, request: &CompletionRequest) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = serde_json::json!(request.stop_sequences);
        }
        match self.config.style {
            ApiStyle::Chat => {
                body["messages"] =
                    serde_json::json!([{ "role": "user", "content": request.prompt }]);
            }
            ApiStyle::Completion => {
                body["prompt"] = serde_json::json!(request.prompt);
            }
        }
        body
    }
}

impl Backend for HttpCompletionBackend {
    fn raw_complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let _slot = self.limiter.acquire();
        let response = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.config.api_key)
            .json(&self.request_body(request))
            .send()
            .map_err(|e| LlmError::Transport(e.to_string()))?;

        let status = response.status();
        let body = response
            .text()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(LlmError::Transport(format!("HTTP {status}: {body}")));
        }
        if !status.is_success() {
            return Err(LlmError::Refusal(format!("HTTP {status}: {body}")));
        }
        match self.config.style {
            ApiStyle::Chat => parse_chat_response(&body),
            ApiStyle::Completion => parse_completion_response(&body),
        }
    }

    fn describe(&self) -> String {
        format!("http:{}:{}", self.endpoint(), self.config.model)
    }

    fn retry_policy(&self) -> RetryPolicy {
        self.config.retry
    }
}

pub(crate) fn parse_chat_response(body: &str) -> Result<String, LlmError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| LlmError::Refusal(format!("malformed response JSON: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::Refusal("response carries no message content".into()))
}

pub(crate) fn parse_completion_response(body: &str) -> Result<String, LlmError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| LlmError::Refusal(format!("malformed response JSON: {e}")))?;
    value["choices"][0]["text"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::Refusal("response carries no completion text".into()))
}

/// Counting semaphore bounding concurrent live requests.
struct Limiter {
    state: Mutex<usize>,
    available: Condvar,
    max: usize,
}

struct LimiterGuard<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            state: Mutex::new(0),
            available: Condvar::new(),
            max,
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut in_flight = self.state.lock().unwrap();
        while *in_flight >= self.max {
            in_flight = self.available.wait(in_flight).unwrap();
        }
        *in_flight += 1;
        LimiterGuard(self)
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut in_flight = self.0.state.lock().unwrap();
        *in_flight -= 1;
        self.0.available.notify_one();
    }
}

/// Convenience for programmatic scripts keyed by suffix.
pub type Script = HashMap<String, String>;
