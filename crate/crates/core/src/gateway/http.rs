//! OpenAI-compatible chat-completions transport.
//!
//! Request: `{model, messages[{role, content}], temperature, max_tokens}`;
//! images are base64 data-URL content parts inside the user message. The
//! reply text is the first choice's message content. Auth is a bearer
//! token read from the env var named in the backend config.

use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use super::{BackendConfig, ChatMessage, GatewayError, MessageRole, ModelReply};
use crate::clock::Clock;

const DEFAULT_TEMPERATURE: f64 = 0.2;
const DEFAULT_MAX_TOKENS: u32 = 1024;

pub(super) struct HttpClient {
    client: reqwest::blocking::Client,
}

impl HttpClient {
    pub(super) fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }

    pub(super) fn chat(
        &self,
        cfg: &BackendConfig,
        messages: &[ChatMessage],
        clock: &dyn Clock,
        started: DateTime<Utc>,
    ) -> Result<ModelReply, GatewayError> {
        let body = request_body(cfg, messages)?;
        let token = bearer_token(cfg)?;
        let timeout = std::time::Duration::from_secs_f64(cfg.timeout_s);

        let mut last_err: Option<GatewayError> = None;
        for attempt in 0..=cfg.max_retries {
            if attempt > 0 {
                let backoff = cfg.retry_backoff_s * f64::powi(2.0, attempt as i32 - 1);
                std::thread::sleep(std::time::Duration::from_secs_f64(backoff));
            }
            match self.attempt(cfg, &body, token.as_deref(), timeout) {
                Ok((text, truncated)) => {
                    let ended = clock.now();
                    return Ok(ModelReply {
                        text,
                        latency_s: (ended - started).num_milliseconds().max(0) as f64 / 1000.0,
                        backend_id: cfg.backend_id.clone(),
                        truncated,
                    });
                }
                Err(e) if is_retryable(&e) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one attempt ran"))
    }

    fn attempt(
        &self,
        cfg: &BackendConfig,
        body: &Value,
        token: Option<&str>,
        timeout: std::time::Duration,
    ) -> Result<(String, bool), GatewayError> {
        let mut req = self
            .client
            .post(&cfg.endpoint_url)
            .timeout(timeout)
            .header("content-type", "application/json");
        if let Some(token) = token {
            req = req.header("authorization", format!("Bearer {token}"));
        }
        let resp = req.json(body).send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout {
                    backend_id: cfg.backend_id.clone(),
                    timeout_s: cfg.timeout_s,
                }
            } else {
                GatewayError::Transport {
                    backend_id: cfg.backend_id.clone(),
                    message: e.to_string(),
                }
            }
        })?;

        let status = resp.status().as_u16();
        if status != 200 {
            return Err(GatewayError::BadStatus {
                backend_id: cfg.backend_id.clone(),
                code: status,
            });
        }
        let value: Value = resp.json().map_err(|e| GatewayError::Transport {
            backend_id: cfg.backend_id.clone(),
            message: format!("bad response body: {e}"),
        })?;
        let choice = &value["choices"][0];
        let text = choice["message"]["content"].as_str().unwrap_or_default();
        if text.is_empty() {
            return Err(GatewayError::EmptyCompletion {
                backend_id: cfg.backend_id.clone(),
            });
        }
        let truncated = choice["finish_reason"].as_str() == Some("length");
        Ok((text.to_string(), truncated))
    }
}

fn is_retryable(err: &GatewayError) -> bool {
    match err {
        GatewayError::Transport { .. } | GatewayError::Timeout { .. } => true,
        GatewayError::BadStatus { code, .. } => *code >= 500,
        _ => false,
    }
}

fn bearer_token(cfg: &BackendConfig) -> Result<Option<String>, GatewayError> {
    match &cfg.auth_token_env {
        None => Ok(None),
        Some(name) => std::env::var(name).map(Some).map_err(|_| {
            GatewayError::InvalidConfig(format!(
                "backend {}: auth env var {name} is not set",
                cfg.backend_id
            ))
        }),
    }
}

fn request_body(cfg: &BackendConfig, messages: &[ChatMessage]) -> Result<Value, GatewayError> {
    let mut wire_messages = Vec::with_capacity(messages.len());
    for m in messages {
        let role = match m.role() {
            MessageRole::System => "system",
            MessageRole::User => "user",
            MessageRole::Assistant => "assistant",
        };
        let content = match m.image() {
            None => json!(m.text()),
            Some(image) => {
                let url = image
                    .to_data_url()
                    .map_err(|e| GatewayError::ImageDecode { message: e.to_string() })?;
                let mut parts = vec![json!({"type": "image_url", "image_url": {"url": url}})];
                if !m.text().is_empty() {
                    parts.push(json!({"type": "text", "text": m.text()}));
                }
                json!(parts)
            }
        };
        wire_messages.push(json!({"role": role, "content": content}));
    }
    Ok(json!({
        "model": cfg.model_name,
        "messages": wire_messages,
        "temperature": cfg.temperature.unwrap_or(DEFAULT_TEMPERATURE),
        "max_tokens": cfg.max_tokens.unwrap_or(DEFAULT_MAX_TOKENS),
    }))
}
