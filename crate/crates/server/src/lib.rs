//! HTTP facade: chat, stored maps, health and evaluation runs.

mod eval_runs;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use gtfs_chat_core::agent::{Agent, AgentTurn, AnswerError, Conversation, ErrorCode};
use gtfs_chat_core::api::{ChatRequest, ChatResponse, ComponentStatus, ErrorBody, HealthReport};
use gtfs_chat_core::config::{ServerSettings, ServiceConfig};
use gtfs_chat_core::eval::{EvalError, RunStore};
use gtfs_chat_core::provider::{ProviderError, ProviderStatus, Providers};

pub use eval_runs::{EvalRunRequest, EvalRunStatus, RunState};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Store(#[from] EvalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared service state. The agent is absent when the transit database
/// could not be opened; the service still answers health checks.
pub struct AppState {
    agent: Option<Arc<Agent>>,
    providers: Providers,
    db_path: PathBuf,
    store: Arc<RunStore>,
    settings: ServerSettings,
    permits: Arc<Semaphore>,
    session_locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    eval_runs: eval_runs::Registry,
}

impl AppState {
    /// Opens the database and providers named by `config`. A missing or
    /// unreadable database is logged, not fatal.
    pub fn open(db_path: &Path, config: &ServiceConfig) -> Result<Self, ServerError> {
        let providers = Providers::from_config(&config.provider)?;
        let agent = match Agent::open(
            db_path,
            config.exemplars.as_deref(),
            providers.clone(),
            config.agent.clone(),
        ) {
            Ok(agent) => Some(Arc::new(agent)),
            Err(e) => {
                tracing::error!("transit database unavailable: {e}");
                None
            }
        };
        let store = Arc::new(RunStore::open(&config.server.store)?);
        Ok(Self::assemble(
            agent,
            providers,
            db_path.to_owned(),
            store,
            config.server.clone(),
        ))
    }

    pub fn with_agent(agent: Agent, store: RunStore, settings: ServerSettings) -> Self {
        let providers = agent.providers().clone();
        let db_path = agent.pool().handle().path().to_owned();
        Self::assemble(
            Some(Arc::new(agent)),
            providers,
            db_path,
            Arc::new(store),
            settings,
        )
    }

    fn assemble(
        agent: Option<Arc<Agent>>,
        providers: Providers,
        db_path: PathBuf,
        store: Arc<RunStore>,
        settings: ServerSettings,
    ) -> Self {
        Self {
            agent,
            providers,
            db_path,
            store,
            permits: Arc::new(Semaphore::new(settings.max_concurrent_requests.max(1))),
            settings,
            session_locks: Mutex::new(HashMap::new()),
            eval_runs: eval_runs::Registry::default(),
        }
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn session_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.session_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.retain(|_, lock| Arc::strong_count(lock) > 1);
        locks.entry(id.to_owned()).or_default().clone()
    }

    pub fn health(&self) -> HealthReport {
        let readable = gtfs_chat_core::db::open_read_only(&self.db_path).is_ok_and(|c| {
            c.query_row("SELECT count(*) FROM routes", [], |_| Ok(()))
                .is_ok()
        });
        let db = if readable && self.agent.is_some() {
            ComponentStatus::Ok
        } else {
            ComponentStatus::Error
        };
        let provider = match self.providers.completion.status() {
            ProviderStatus::Ok => ComponentStatus::Ok,
            ProviderStatus::Unconfigured => ComponentStatus::Unconfigured,
        };
        HealthReport {
            db,
            provider,
            version: VERSION.to_owned(),
        }
    }
}

type Shared = Arc<AppState>;

fn error_response(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            code: code.to_owned(),
            message: message.into(),
        }),
    )
        .into_response()
}

fn cors(settings: &ServerSettings) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    if settings.cors_origins.iter().any(|o| o == "*") {
        return layer.allow_origin(Any);
    }
    let origins: Vec<HeaderValue> = settings
        .cors_origins
        .iter()
        .filter_map(|o| o.parse().ok())
        .collect();
    layer.allow_origin(AllowOrigin::list(origins))
}

pub fn router(state: Shared) -> Router {
    let cors = cors(&state.settings);
    Router::new()
        .route("/api/chat", post(chat))
        .route("/api/maps/{map_id}", get(get_map))
        .route("/api/health", get(health))
        .route("/api/eval/runs", post(eval_runs::start))
        .route("/api/eval/runs/{run_id}", get(eval_runs::status))
        .layer(cors)
        .with_state(state)
}

async fn health(State(state): State<Shared>) -> Json<HealthReport> {
    let s = state.clone();
    let report = tokio::task::spawn_blocking(move || s.health())
        .await
        .unwrap_or_else(|_| HealthReport {
            db: ComponentStatus::Error,
            provider: ComponentStatus::Error,
            version: VERSION.to_owned(),
        });
    Json(report)
}

async fn get_map(State(state): State<Shared>, UrlPath(map_id): UrlPath<String>) -> Response {
    match state.store.get_map(&map_id) {
        Ok(Some(doc)) => ([(header::CONTENT_TYPE, "application/geo+json")], doc).into_response(),
        Ok(None) => error_response(
            StatusCode::NOT_FOUND,
            "unknown_map",
            format!("no map with id {map_id}"),
        ),
        Err(e) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            "store_error",
            e.to_string(),
        ),
    }
}

fn persist(
    state: &AppState,
    conversation: &Conversation,
    turn: &AgentTurn,
) -> Result<(), EvalError> {
    state.store.save_session(conversation, Utc::now())?;
    let mut stored = turn.clone();
    if !state.settings.persist_traces {
        stored.tool_trace.clear();
    }
    stored.map_document = None;
    state.store.append_turn(
        &conversation.session_id,
        conversation.turns.len() - 1,
        &stored,
    )?;
    if let (Some(id), Some(doc)) = (&turn.answer.map, &turn.map_document) {
        state.store.put_map(id, &doc.to_json())?;
    }
    Ok(())
}

async fn chat(State(state): State<Shared>, body: Bytes) -> Response {
    let request: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, "invalid_request", e.to_string()),
    };
    if let Err(e) = request.validate() {
        return error_response(StatusCode::BAD_REQUEST, "invalid_request", e.to_string());
    }
    let Some(agent) = state.agent.clone() else {
        return error_response(
            StatusCode::SERVICE_UNAVAILABLE,
            "database_unavailable",
            "the transit database is not loaded",
        );
    };
    let Ok(_permit) = state.permits.clone().acquire_owned().await else {
        return error_response(
            StatusCode::SERVICE_UNAVAILABLE,
            "shutting_down",
            "the service is shutting down",
        );
    };

    let session_id = request
        .session_id
        .clone()
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let lock = state.session_lock(&session_id);
    let _turn_guard = lock.lock().await;

    let idle = chrono::Duration::hours(state.settings.session_idle_hours as i64);
    if let Err(e) = state.store.expire_sessions(Utc::now() - idle) {
        tracing::warn!("session expiry failed: {e}");
    }
    let conversation = match state.store.load_conversation(&session_id) {
        Ok(found) => found.unwrap_or_else(|| Conversation::new(session_id.clone())),
        Err(e) => {
            return error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                "store_error",
                e.to_string(),
            )
        }
    };

    let message = request.message.clone();
    let worker_state = state.clone();
    let work = tokio::task::spawn_blocking(move || {
        let mut conversation = conversation;
        let turn = agent.handle_question(&mut conversation, &message);
        if let Err(e) = persist(&worker_state, &conversation, &turn) {
            tracing::error!("cannot persist turn: {e}");
        }
        turn
    });
    let timeout = Duration::from_secs(state.settings.request_timeout_secs);
    let turn = match tokio::time::timeout(timeout, work).await {
        Ok(Ok(turn)) => turn,
        Ok(Err(e)) => {
            return error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                "internal_error",
                e.to_string(),
            )
        }
        Err(_) => {
            let response = ChatResponse {
                session_id,
                answer_text: "The question took too long to answer.".into(),
                sql: None,
                rows: None,
                map_id: None,
                assumptions: Vec::new(),
                error: Some(AnswerError {
                    code: ErrorCode::RequestTimeout,
                    message: format!("no answer within {timeout:?}"),
                }),
                guard: None,
            };
            return Json(response).into_response();
        }
    };

    if let Some(err) = &turn.answer.error {
        let code = match err.code {
            ErrorCode::ProviderUnavailable => Some("provider_unavailable"),
            ErrorCode::ProviderUnconfigured => Some("provider_unconfigured"),
            _ => None,
        };
        if let Some(code) = code {
            return error_response(StatusCode::SERVICE_UNAVAILABLE, code, err.message.clone());
        }
    }
    Json(ChatResponse::from_turn(session_id, &turn)).into_response()
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: AppState) -> Result<(), ServerError> {
    let addr = format!("{}:{}", state.settings.host, state.settings.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: addr.clone(),
            source,
        })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
