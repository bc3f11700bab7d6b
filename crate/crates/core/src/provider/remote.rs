use std::time::Duration;

use reqwest::StatusCode;
use serde_json::{json, Value};

use super::embedding::EmbeddingVector;
use super::{CompletionProvider, CompletionRequest, EmbeddingProvider, ProviderError, Role};

pub const ENV_ENDPOINT: &str = "GTFS_CHAT_LLM_ENDPOINT";
pub const ENV_MODEL: &str = "GTFS_CHAT_LLM_MODEL";
pub const ENV_EMBEDDING_MODEL: &str = "GTFS_CHAT_EMBEDDING_MODEL";
pub const ENV_API_KEY: &str = "GTFS_CHAT_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            initial_backoff: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RemoteSettings {
    /// Base URL; `/chat/completions` and `/embeddings` are appended.
    pub endpoint: String,
    pub model: String,
    pub embedding_model: String,
    pub api_key: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Requests larger than this many characters fail before being sent.
    pub max_context_chars: Option<usize>,
}

impl RemoteSettings {
    /// Environment variables override the given defaults; the API key can
    /// only come from the environment.
    pub fn from_env(
        endpoint: Option<String>,
        model: Option<String>,
        embedding_model: Option<String>,
    ) -> Result<Self, ProviderError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let endpoint = var(ENV_ENDPOINT)
            .or(endpoint)
            .unwrap_or_else(|| "https://api.openai.com/v1".into());
        let model = var(ENV_MODEL)
            .or(model)
            .ok_or_else(|| ProviderError::Unconfigured(format!("{ENV_MODEL} is not set")))?;
        let embedding_model = var(ENV_EMBEDDING_MODEL)
            .or(embedding_model)
            .unwrap_or_else(|| model.clone());
        let api_key = var(ENV_API_KEY)
            .ok_or_else(|| ProviderError::Unconfigured(format!("{ENV_API_KEY} is not set")))?;
        Ok(Self {
            endpoint,
            model,
            embedding_model,
            api_key,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
            max_context_chars: None,
        })
    }
}

enum Attempt {
    Done(Value),
    Retry(String),
    Fail(ProviderError),
}

/// Client for an OpenAI-compatible chat and embeddings API.
///
/// Calls block; run them off async executors.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    settings: RemoteSettings,
}

impl RemoteProvider {
    pub fn new(settings: RemoteSettings) -> Result<Self, ProviderError> {
        reqwest::Url::parse(&settings.endpoint).map_err(|e| {
            ProviderError::InvalidRequest(format!("endpoint {:?}: {e}", settings.endpoint))
        })?;
        Ok(Self { settings })
    }

    pub fn settings(&self) -> &RemoteSettings {
        &self.settings
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.settings.endpoint.trim_end_matches('/'))
    }

    fn attempt(&self, client: &reqwest::blocking::Client, url: &str, body: &Value) -> Attempt {
        let response = match client
            .post(url)
            .bearer_auth(&self.settings.api_key)
            .json(body)
            .send()
        {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        let text = response.text().unwrap_or_default();
        if status.is_success() {
            return match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(ProviderError::Unavailable {
                    attempts: 1,
                    cause: format!("bad response body: {e}"),
                }),
            };
        }
        let lower = text.to_lowercase();
        if lower.contains("context_length_exceeded") || lower.contains("maximum context length") {
            return Attempt::Fail(ProviderError::ContextOverflow {
                chars: body.to_string().chars().count(),
                limit: self.settings.max_context_chars.unwrap_or(0),
            });
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            Attempt::Retry(format!("HTTP {status}"))
        } else {
            Attempt::Fail(ProviderError::InvalidRequest(format!(
                "HTTP {status}: {}",
                truncate(&text, 300)
            )))
        }
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, ProviderError> {
        // Built per call: a blocking client must not be dropped inside an
        // async runtime, and providers are shared with one.
        let client = reqwest::blocking::Client::builder()
            .timeout(self.settings.timeout)
            .build()
            .map_err(|e| ProviderError::Unavailable {
                attempts: 0,
                cause: e.to_string(),
            })?;
        let url = self.url(path);
        let mut backoff = self.settings.retry.initial_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&client, &url, &body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(ProviderError::Unavailable { cause, .. }) => {
                    return Err(ProviderError::Unavailable { attempts, cause })
                }
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(cause) => {
                    if attempts > self.settings.retry.max_retries {
                        return Err(ProviderError::Unavailable { attempts, cause });
                    }
                    tracing::debug!(attempts, %cause, "retrying provider call");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

impl CompletionProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.settings.model)
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        request.validate()?;
        if let Some(limit) = self.settings.max_context_chars {
            let chars = request.prompt_chars();
            if chars > limit {
                return Err(ProviderError::ContextOverflow { chars, limit });
            }
        }
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(
            request
                .messages
                .iter()
                .map(|m| json!({"role": role_name(m.role), "content": m.content})),
        );
        let body = json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let value = self.post("chat/completions", body)?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Unavailable {
                attempts: 1,
                cause: "response has no message content".into(),
            })
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.settings.embedding_model)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest(
                "text to embed is empty".into(),
            ));
        }
        let value = self.post(
            "embeddings",
            json!({"model": self.settings.embedding_model, "input": text}),
        )?;
        let values = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Unavailable {
                attempts: 1,
                cause: "response has no embedding".into(),
            })?
            .iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| ProviderError::Unavailable {
                    attempts: 1,
                    cause: "non-numeric embedding".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        EmbeddingVector::new(values)
    }
}
