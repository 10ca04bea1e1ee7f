//! Uniform client layer over heterogeneous model backends.
//!
//! One [`Gateway`] serves every role: a text-only reasoning backbone, N
//! vision-language backends, a judge, and a deterministic scripted mock for
//! tests. Backend identities (endpoints, model names) are configuration
//! values, never code. Calls are bounded by a global in-flight limit;
//! [`Gateway::fan_out`] queries the whole vision suite concurrently and
//! joins results in suite-config order with per-slot fault isolation.

mod http;
mod mock;

pub use mock::{MockRoleTag, MockScript};

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{SharedClock, SystemClock};
use crate::task::ImageRef;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend {backend_id} timed out after {timeout_s}s")]
    Timeout { backend_id: String, timeout_s: f64 },
    #[error("backend {backend_id} transport failure: {message}")]
    Transport { backend_id: String, message: String },
    #[error("backend {backend_id} returned status {code}")]
    BadStatus { backend_id: String, code: u16 },
    #[error("backend {backend_id} returned an empty completion")]
    EmptyCompletion { backend_id: String },
    #[error("cannot read image: {message}")]
    ImageDecode { message: String },
    #[error("mock script {path} invalid: {message}")]
    ScriptParse { path: PathBuf, message: String },
    #[error("mock script has no reply for role {role}, ordinal {ordinal}, question {question:?}")]
    MockKeyMissing {
        role: String,
        ordinal: usize,
        question: String,
    },
    #[error("all {0} suite backends failed")]
    AllBackendsFailed(usize),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ChatText,
    ChatVision,
    Mock,
}

fn default_timeout_s() -> f64 {
    60.0
}

fn default_retry_backoff_s() -> f64 {
    0.05
}

/// One backend endpoint. For `kind = mock`, `endpoint_url` is the script
/// file path instead of an HTTP endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub backend_id: String,
    pub kind: BackendKind,
    pub endpoint_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_retry_backoff_s")]
    pub retry_backoff_s: f64,
}

impl BackendConfig {
    /// Builds a mock backend from a script file, validating the script
    /// eagerly so a bad script fails at configuration time.
    pub fn mock_from_script(
        backend_id: impl Into<String>,
        path: impl Into<PathBuf>,
    ) -> Result<Self, GatewayError> {
        let path = path.into();
        MockScript::load(&path)?;
        Ok(Self {
            backend_id: backend_id.into(),
            kind: BackendKind::Mock,
            endpoint_url: path.to_string_lossy().into_owned(),
            model_name: "mock".into(),
            timeout_s: default_timeout_s(),
            max_retries: 0,
            auth_token_env: None,
            temperature: None,
            max_tokens: None,
            retry_backoff_s: default_retry_backoff_s(),
        })
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout_s <= 0.0 {
            return Err(GatewayError::InvalidConfig(format!(
                "backend {}: timeout_s must be > 0",
                self.backend_id
            )));
        }
        if self.endpoint_url.trim().is_empty() {
            return Err(GatewayError::InvalidConfig(format!(
                "backend {}: endpoint_url (or mock script path) required",
                self.backend_id
            )));
        }
        if self.kind == BackendKind::Mock && !PathBuf::from(&self.endpoint_url).exists() {
            return Err(GatewayError::InvalidConfig(format!(
                "backend {}: mock script {} does not exist",
                self.backend_id, self.endpoint_url
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

/// One chat turn on the wire. Images ride only on user messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    role: MessageRole,
    text: String,
    image: Option<ImageRef>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::System,
            text: text.into(),
            image: None,
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::User,
            text: text.into(),
            image: None,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: MessageRole::Assistant,
            text: text.into(),
            image: None,
        }
    }

    /// A user message with an image attached. Text may be empty only here.
    pub fn user_with_image(text: impl Into<String>, image: ImageRef) -> Self {
        Self {
            role: MessageRole::User,
            text: text.into(),
            image: Some(image),
        }
    }

    pub fn role(&self) -> MessageRole {
        self.role
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn image(&self) -> Option<&ImageRef> {
        self.image.as_ref()
    }
}

/// A backend completion plus call accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReply {
    pub text: String,
    /// Wall-clock seconds around the backend call only.
    pub latency_s: f64,
    pub backend_id: String,
    pub truncated: bool,
}

/// A suite backend that failed; its siblings' replies are unaffected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureRecord {
    pub backend_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceOutcome {
    Reply(ModelReply),
    Failure(FailureRecord),
}

/// One vision backend's answer to the inquirer's question.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualEvidence {
    pub backend_id: String,
    /// The inquirer's extracted question, verbatim.
    pub question: String,
    pub outcome: EvidenceOutcome,
    pub started_at: DateTime<Utc>,
    pub ended_at: DateTime<Utc>,
}

impl VisualEvidence {
    /// Text as presented to the revisor. Failures become an explicit
    /// unavailability marker so citation numbering stays aligned.
    pub fn display_text(&self) -> String {
        match &self.outcome {
            EvidenceOutcome::Reply(reply) => reply.text.clone(),
            EvidenceOutcome::Failure(f) => format!("[backend {} unavailable]", f.backend_id),
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self.outcome, EvidenceOutcome::Failure(_))
    }
}

/// Record of one dispatched call, for tests and diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedCall {
    pub backend_id: String,
    pub kind: BackendKind,
    pub has_image: bool,
    /// Set for vision queries: the question as sent.
    pub question: Option<String>,
}

struct InFlightLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
}

impl InFlightLimiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut count = self.in_flight.lock().unwrap();
        while *count >= self.max {
            count = self.cv.wait(count).unwrap();
        }
        *count += 1;
        drop(count);
        let out = f();
        *self.in_flight.lock().unwrap() -= 1;
        self.cv.notify_one();
        out
    }
}

/// Shared client over every configured backend.
pub struct Gateway {
    clock: SharedClock,
    http: http::HttpClient,
    mocks: Mutex<HashMap<PathBuf, Arc<mock::MockBackend>>>,
    limiter: InFlightLimiter,
    call_log: Option<Mutex<Vec<LoggedCall>>>,
}

impl Gateway {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            http: http::HttpClient::new(),
            mocks: Mutex::new(HashMap::new()),
            limiter: InFlightLimiter::new(16),
            call_log: None,
        }
    }

    pub fn with_system_clock() -> Self {
        Self::new(Arc::new(SystemClock))
    }

    pub fn with_max_in_flight(mut self, max: usize) -> Self {
        self.limiter = InFlightLimiter::new(max);
        self
    }

    /// Records every dispatched call; tests use this to assert what was
    /// actually sent to which backend.
    pub fn with_call_logging(mut self) -> Self {
        self.call_log = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn call_log(&self) -> Vec<LoggedCall> {
        self.call_log
            .as_ref()
            .map(|log| log.lock().unwrap().clone())
            .unwrap_or_default()
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    fn log_call(&self, entry: LoggedCall) {
        if let Some(log) = &self.call_log {
            log.lock().unwrap().push(entry);
        }
    }

    fn mock_backend(&self, cfg: &BackendConfig) -> Result<Arc<mock::MockBackend>, GatewayError> {
        let path = PathBuf::from(&cfg.endpoint_url);
        let mut mocks = self.mocks.lock().unwrap();
        if let Some(backend) = mocks.get(&path) {
            return Ok(backend.clone());
        }
        let backend = Arc::new(mock::MockBackend::load(&path)?);
        mocks.insert(path, backend.clone());
        Ok(backend)
    }

    /// Text chat against a backbone (or mock) backend.
    ///
    /// Retries transport failures and 5xx statuses up to `max_retries` with
    /// exponential backoff; 4xx statuses indicate a configuration bug and
    /// are never retried.
    pub fn chat(
        &self,
        cfg: &BackendConfig,
        messages: &[ChatMessage],
    ) -> Result<ModelReply, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::Precondition("messages must be non-empty".into()));
        }
        if cfg.kind == BackendKind::ChatVision {
            return Err(GatewayError::Precondition(format!(
                "backend {} is a vision backend; use vision_query",
                cfg.backend_id
            )));
        }
        if cfg.kind == BackendKind::ChatText && messages.iter().any(|m| m.image.is_some()) {
            return Err(GatewayError::Precondition(format!(
                "backend {} is text-only; a message carries an image",
                cfg.backend_id
            )));
        }
        if messages.iter().any(|m| m.text.is_empty() && m.image.is_none()) {
            return Err(GatewayError::Precondition(
                "message text may be empty only when an image is attached".into(),
            ));
        }
        self.log_call(LoggedCall {
            backend_id: cfg.backend_id.clone(),
            kind: cfg.kind,
            has_image: messages.iter().any(|m| m.image.is_some()),
            question: None,
        });
        self.dispatch(cfg, messages)
    }

    /// Sends one user message — the rendered vision prompt with the image
    /// attached at its slot — and returns the reply.
    pub fn vision_query(
        &self,
        cfg: &BackendConfig,
        image: &ImageRef,
        question: &str,
    ) -> Result<ModelReply, GatewayError> {
        if question.trim().is_empty() {
            return Err(GatewayError::Precondition("question must be non-empty".into()));
        }
        if cfg.kind == BackendKind::ChatText {
            return Err(GatewayError::Precondition(format!(
                "backend {} is text-only; cannot take a vision query",
                cfg.backend_id
            )));
        }
        // Validate the payload before any network traffic.
        image
            .load_bytes()
            .map_err(|e| GatewayError::ImageDecode { message: e.to_string() })?;
        self.log_call(LoggedCall {
            backend_id: cfg.backend_id.clone(),
            kind: cfg.kind,
            has_image: true,
            question: Some(question.to_string()),
        });
        let messages = [ChatMessage::user_with_image(question, image.clone())];
        self.dispatch(cfg, &messages)
    }

    /// Queries every suite backend concurrently with the same question.
    /// The result order equals suite-config order regardless of completion
    /// order; a failing backend yields a failure record in its slot and
    /// never aborts its siblings.
    pub fn fan_out(
        &self,
        suite: &[BackendConfig],
        image: &ImageRef,
        question: &str,
    ) -> Result<Vec<VisualEvidence>, GatewayError> {
        if suite.is_empty() {
            return Err(GatewayError::Precondition("suite must be non-empty".into()));
        }
        if question.trim().is_empty() {
            return Err(GatewayError::Precondition("question must be non-empty".into()));
        }
        image
            .load_bytes()
            .map_err(|e| GatewayError::ImageDecode { message: e.to_string() })?;

        let evidence: Vec<VisualEvidence> = std::thread::scope(|scope| {
            let handles: Vec<_> = suite
                .iter()
                .map(|cfg| {
                    scope.spawn(move || {
                        let started_at = self.clock.now();
                        let outcome = match self.vision_query(cfg, image, question) {
                            Ok(reply) => EvidenceOutcome::Reply(reply),
                            Err(e) => EvidenceOutcome::Failure(FailureRecord {
                                backend_id: cfg.backend_id.clone(),
                                message: e.to_string(),
                            }),
                        };
                        VisualEvidence {
                            backend_id: cfg.backend_id.clone(),
                            question: question.to_string(),
                            outcome,
                            started_at,
                            ended_at: self.clock.now(),
                        }
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fan-out worker must not panic"))
                .collect()
        });

        if evidence.iter().all(VisualEvidence::is_failure) {
            return Err(GatewayError::AllBackendsFailed(suite.len()));
        }
        Ok(evidence)
    }

    fn dispatch(
        &self,
        cfg: &BackendConfig,
        messages: &[ChatMessage],
    ) -> Result<ModelReply, GatewayError> {
        self.limiter.run(|| {
            let started = self.clock.now();
            let text = match cfg.kind {
                BackendKind::Mock => {
                    let backend = self.mock_backend(cfg)?;
                    backend.reply(messages)?
                }
                BackendKind::ChatText | BackendKind::ChatVision => {
                    return self.http.chat(cfg, messages, self.clock.as_ref(), started);
                }
            };
            let ended = self.clock.now();
            Ok(ModelReply {
                text,
                latency_s: (ended - started).num_milliseconds().max(0) as f64 / 1000.0,
                backend_id: cfg.backend_id.clone(),
                truncated: false,
            })
        })
    }
}
