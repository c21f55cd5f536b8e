//! Chat-completion clients.
//!
//! [`HttpChatClient`] talks to any endpoint that accepts the common
//! chat-completions schema (`POST {base_url}/chat/completions`, messages made of
//! typed content parts, images as data URIs). [`ScriptedClient`] replays a
//! fixed list of responses for offline runs and tests.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use crate::image::ImageBlob;
use crate::session::{ContentPart, Message, Role, SessionTrace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: u32,
    /// Seconds.
    pub request_timeout: f64,
    /// First retry delay in seconds; doubles on every further attempt.
    pub backoff_base: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            model_id: "gpt-4.1".into(),
            temperature: 0.6,
            max_retries: 3,
            request_timeout: 120.0,
            backoff_base: 1.0,
            max_tokens: None,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ClientError::Usage("temperature must lie in [0, 2]".into()));
        }
        if !self.request_timeout.is_finite() || self.request_timeout <= 0.0 {
            return Err(ClientError::Usage("request_timeout must be positive".into()));
        }
        Ok(())
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelResponse {
    pub text: String,
    pub usage: Option<Usage>,
    /// Seconds, including retries.
    pub latency: f64,
    pub retries: u32,
}

impl ModelResponse {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            usage: None,
            latency: 0.0,
            retries: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("provider returned an empty response")]
    EmptyResponse,
    #[error("scripted client exhausted after {0} response(s)")]
    ScriptExhausted(usize),
    #[error("invalid request: {0}")]
    Usage(String),
}

/// Anything that can turn a conversation into the next assistant message.
pub trait ChatModel: Send + Sync {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError>;
}

impl<T: ChatModel + ?Sized> ChatModel for &T {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError> {
        (**self).complete(messages)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for Box<T> {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError> {
        (**self).complete(messages)
    }
}

impl<T: ChatModel + ?Sized> ChatModel for std::sync::Arc<T> {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError> {
        (**self).complete(messages)
    }
}

/// `data:image/png;base64,...` for an image part.
pub fn encode_image(img: &ImageBlob) -> String {
    format!("data:image/png;base64,{}", STANDARD.encode(img.bytes()))
}

fn check_messages(messages: &[Message]) -> Result<(), ClientError> {
    match messages.first() {
        None => Err(ClientError::Usage("no messages to send".into())),
        Some(m) if m.role != Role::System => {
            Err(ClientError::Usage("the first message must be the system prompt".into()))
        }
        Some(_) => Ok(()),
    }
}

/// Serializes the request body. Identical inputs give identical bytes.
pub fn build_request_body(messages: &[Message], config: &ClientConfig) -> Vec<u8> {
    let messages: Vec<Value> = messages
        .iter()
        .map(|m| {
            let content: Vec<Value> = m
                .parts
                .iter()
                .map(|part| match part {
                    ContentPart::Text { text } => json!({"type": "text", "text": text}),
                    ContentPart::Image { image } => {
                        json!({"type": "image_url", "image_url": {"url": encode_image(image)}})
                    }
                })
                .collect();
            json!({"role": m.role.as_str(), "content": content})
        })
        .collect();
    let mut body = json!({
        "model": config.model_id,
        "temperature": config.temperature,
        "messages": messages,
    });
    if let Some(max_tokens) = config.max_tokens {
        body["max_tokens"] = json!(max_tokens);
    }
    serde_json::to_vec(&body).expect("request bodies always serialize")
}

/// Pulls the assistant text and usage out of a chat-completions response.
pub fn parse_response_body(body: &str) -> Result<(String, Option<Usage>), ClientError> {
    let value: Value = serde_json::from_str(body).map_err(|e| ClientError::Provider {
        status: 200,
        body: format!("unparseable response ({e}): {}", truncate(body, 500)),
    })?;
    let content = &value["choices"][0]["message"]["content"];
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect(),
        _ => String::new(),
    };
    if text.is_empty() {
        return Err(ClientError::EmptyResponse);
    }
    let usage = value.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Ok((text, usage))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Minimal HTTP POST abstraction so retry logic can be exercised offline.
pub trait Transport: Send + Sync {
    /// `Err` means the request never produced an HTTP status.
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &[u8],
        timeout: Duration,
    ) -> Result<HttpReply, String>;
}

#[derive(Default)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &[u8],
        timeout: Duration,
    ) -> Result<HttpReply, String> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(body.to_vec());
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

fn is_transient(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

/// POSTs `body` with retries and exponential backoff. Shared by the chat and
/// embeddings clients.
pub(crate) fn post_with_retries(
    transport: &dyn Transport,
    config: &ClientConfig,
    url: &str,
    body: &[u8],
) -> Result<(HttpReply, u32), ClientError> {
    let key = config.api_key();
    let timeout = Duration::from_secs_f64(config.request_timeout);
    let mut attempt = 0u32;
    loop {
        let outcome = transport.post_json(url, key.as_deref(), body, timeout);
        let retryable = match &outcome {
            Ok(reply) if (200..300).contains(&reply.status) => {
                return Ok((outcome.expect("matched ok"), attempt));
            }
            Ok(reply) if reply.status == 401 || reply.status == 403 => {
                return Err(ClientError::Auth(format!(
                    "HTTP {} (key from ${}): {}",
                    reply.status,
                    config.api_key_env,
                    truncate(&reply.body, 500)
                )));
            }
            Ok(reply) => is_transient(reply.status),
            Err(_) => true,
        };
        if !retryable || attempt >= config.max_retries {
            return Err(match outcome {
                Ok(reply) => ClientError::Provider {
                    status: reply.status,
                    body: truncate(&reply.body, 2000).to_string(),
                },
                Err(message) => ClientError::Transport {
                    attempts: attempt + 1,
                    message,
                },
            });
        }
        let delay = config.backoff_base * 2f64.powi(attempt as i32);
        warn!(attempt, delay, "transient failure talking to model endpoint, retrying");
        if delay > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(delay));
        }
        attempt += 1;
    }
}

pub struct HttpChatClient {
    config: ClientConfig,
    transport: Box<dyn Transport>,
}

impl HttpChatClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        Self::with_transport(config, Box::new(ReqwestTransport::default()))
    }

    pub fn with_transport(config: ClientConfig, transport: Box<dyn Transport>) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(Self { config, transport })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl ChatModel for HttpChatClient {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError> {
        check_messages(messages)?;
        let body = build_request_body(messages, &self.config);
        let started = Instant::now();
        let (reply, retries) = post_with_retries(self.transport.as_ref(), &self.config, &self.endpoint(), &body)?;
        let (text, usage) = parse_response_body(&reply.body)?;
        let latency = started.elapsed().as_secs_f64();
        debug!(latency, retries, "model call complete");
        Ok(ModelResponse {
            text,
            usage,
            latency,
            retries,
        })
    }
}

/// Replays a fixed script: the k-th call returns the k-th entry.
#[derive(Debug)]
pub struct ScriptedClient {
    script: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedClient {
    pub fn new<I, S>(script: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: script.into_iter().map(Into::into).collect(),
            cursor: Mutex::new(0),
        }
    }

    /// A client that replays the assistant turns of a recorded trace.
    pub fn from_trace(trace: &SessionTrace) -> Self {
        Self::new(trace.turns.iter().map(|t| t.model_text.clone()))
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().expect("script cursor")
    }
}

impl ChatModel for ScriptedClient {
    fn complete(&self, messages: &[Message]) -> Result<ModelResponse, ClientError> {
        check_messages(messages)?;
        let mut cursor = self.cursor.lock().expect("script cursor");
        let text = self
            .script
            .get(*cursor)
            .cloned()
            .ok_or(ClientError::ScriptExhausted(self.script.len()))?;
        *cursor += 1;
        Ok(ModelResponse::text(text))
    }
}

/// `scripted_client(script)`; see [`ScriptedClient`].
pub fn scripted_client<I, S>(script: I) -> ScriptedClient
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    ScriptedClient::new(script)
}
