//! Text generation and embedding services behind two narrow traits.
//!
//! [`ScriptedProvider`] answers from a local file of pattern/response pairs
//! and embeds text by hashing its tokens, so the whole pipeline can run
//! offline and deterministically. [`RemoteProvider`] talks to an
//! OpenAI-compatible HTTPS API.

mod embedding;
mod remote;
mod scripted;

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use embedding::{cosine, hash_embedding, tokenize, EmbeddingVector, SCRIPTED_DIMENSION};
pub use remote::{
    RemoteProvider, RemoteSettings, RetryPolicy, ENV_API_KEY, ENV_EMBEDDING_MODEL, ENV_ENDPOINT,
    ENV_MODEL,
};
pub use scripted::{ScriptRule, ScriptedProvider};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider unavailable after {attempts} attempt(s): {cause}")]
    Unavailable { attempts: u32, cause: String },
    #[error("prompt of {chars} characters exceeds the provider limit of {limit}")]
    ContextOverflow { chars: usize, limit: usize },
    #[error("no scripted response matches the request")]
    NoScriptMatch,
    #[error("provider is not configured: {0}")]
    Unconfigured(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// What a completion is for. Only scripted providers look at it; it is never
/// sent over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    GenerateSql,
    RepairSql,
    Synthesize,
    ClassifyMap,
    Paraphrase,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Purpose::GenerateSql => "generate_sql",
            Purpose::RepairSql => "repair_sql",
            Purpose::Synthesize => "synthesize",
            Purpose::ClassifyMap => "classify_map",
            Purpose::Paraphrase => "paraphrase",
        };
        f.write_str(s)
    }
}

/// Default temperature: SQL generation should be as reproducible as possible.
pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub purpose: Purpose,
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(purpose: Purpose, system_prompt: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            purpose,
            system_prompt: system_prompt.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "messages must not be empty".into(),
            ));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(ProviderError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Prompt size in characters, system prompt included.
    pub fn prompt_chars(&self) -> usize {
        self.system_prompt.chars().count()
            + self
                .messages
                .iter()
                .map(|m| m.content.chars().count())
                .sum::<usize>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderStatus {
    Ok,
    Unconfigured,
}

pub trait CompletionProvider: Send + Sync {
    /// Stable identity of the model behind the provider.
    fn id(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;

    fn status(&self) -> ProviderStatus {
        ProviderStatus::Ok
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identity of the embedding model; vectors from different identities
    /// are not comparable.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;
}

/// Stand-in used when the configured remote provider lacks credentials.
#[derive(Debug, Clone)]
pub struct UnconfiguredProvider {
    pub reason: String,
}

impl CompletionProvider for UnconfiguredProvider {
    fn id(&self) -> String {
        "unconfigured".into()
    }

    fn complete(&self, _: &CompletionRequest) -> Result<String, ProviderError> {
        Err(ProviderError::Unconfigured(self.reason.clone()))
    }

    fn status(&self) -> ProviderStatus {
        ProviderStatus::Unconfigured
    }
}

impl EmbeddingProvider for UnconfiguredProvider {
    fn id(&self) -> String {
        "unconfigured".into()
    }

    fn embed(&self, _: &str) -> Result<EmbeddingVector, ProviderError> {
        Err(ProviderError::Unconfigured(self.reason.clone()))
    }
}

/// Provider section of the service configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    Scripted {
        script: PathBuf,
    },
    Remote {
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        model: Option<String>,
        #[serde(default)]
        embedding_model: Option<String>,
        #[serde(default = "default_retries")]
        max_retries: u32,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default)]
        max_context_chars: Option<usize>,
    },
}

fn default_retries() -> u32 {
    2
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Clone)]
pub struct Providers {
    pub completion: Arc<dyn CompletionProvider>,
    pub embedding: Arc<dyn EmbeddingProvider>,
}

impl fmt::Debug for Providers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Providers")
            .field("completion", &self.completion.id())
            .field("embedding", &self.embedding.id())
            .finish()
    }
}

impl Providers {
    pub fn scripted(provider: ScriptedProvider) -> Self {
        let shared = Arc::new(provider);
        Self {
            completion: shared.clone(),
            embedding: shared,
        }
    }

    /// Builds the providers named by `config`. Remote credentials come from
    /// the environment only; when they are missing the result reports
    /// [`ProviderStatus::Unconfigured`] instead of failing.
    pub fn from_config(config: &ProviderConfig) -> Result<Self, ProviderError> {
        match config {
            ProviderConfig::Scripted { script } => {
                Ok(Self::scripted(ScriptedProvider::load(script)?))
            }
            ProviderConfig::Remote {
                endpoint,
                model,
                embedding_model,
                max_retries,
                timeout_secs,
                max_context_chars,
            } => {
                let settings = RemoteSettings::from_env(
                    endpoint.clone(),
                    model.clone(),
                    embedding_model.clone(),
                );
                match settings {
                    Ok(mut settings) => {
                        settings.retry.max_retries = *max_retries;
                        settings.timeout = std::time::Duration::from_secs(*timeout_secs);
                        settings.max_context_chars = *max_context_chars;
                        let shared = Arc::new(RemoteProvider::new(settings)?);
                        Ok(Self {
                            completion: shared.clone(),
                            embedding: shared,
                        })
                    }
                    Err(ProviderError::Unconfigured(reason)) => {
                        let stub = Arc::new(UnconfiguredProvider { reason });
                        Ok(Self {
                            completion: stub.clone(),
                            embedding: stub,
                        })
                    }
                    Err(other) => Err(other),
                }
            }
        }
    }
}
