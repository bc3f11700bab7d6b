//! Service configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::provider::ProviderConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSettings {
    pub host: String,
    pub port: u16,
    pub request_timeout_secs: u64,
    pub session_idle_hours: u64,
    /// Requests processed at once across all sessions.
    pub max_concurrent_requests: usize,
    /// Allowed browser origins; `*` allows any.
    pub cors_origins: Vec<String>,
    /// Run-store database holding sessions, maps and evaluation runs.
    pub store: PathBuf,
    /// Persist tool traces with each turn.
    pub persist_traces: bool,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            request_timeout_secs: 60,
            session_idle_hours: 24,
            max_concurrent_requests: 16,
            cors_origins: vec!["*".into()],
            store: PathBuf::from("runs.sqlite"),
            persist_traces: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub server: ServerSettings,
    pub provider: ProviderConfig,
    pub agent: AgentConfig,
    /// Exemplar file; the shipped set when absent.
    pub exemplars: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            server: ServerSettings::default(),
            provider: ProviderConfig::Remote {
                endpoint: None,
                model: None,
                embedding_model: None,
                max_retries: 2,
                timeout_secs: 30,
                max_context_chars: None,
            },
            agent: AgentConfig::default(),
            exemplars: None,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Loads `path`; relative file paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.server.store);
        if let Some(p) = config.exemplars.as_mut() {
            rebase(p);
        }
        if let ProviderConfig::Scripted { script } = &mut config.provider {
            rebase(script);
        }
        Ok(config)
    }
}
