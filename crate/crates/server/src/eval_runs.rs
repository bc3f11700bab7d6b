//! Background evaluation runs started over HTTP.

use std::collections::HashMap;
use std::sync::Mutex;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use gtfs_chat_core::agent::Agent;
use gtfs_chat_core::eval::{
    grade, run_suite, summarize, AgentClient, EvalError, GeneratedQuestion, GoldResults,
    RepeatPlan, RunStore, SuiteOptions, DEFAULT_SCALAR_TOLERANCE,
};

use crate::{error_response, Shared};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct EvalRunRequest {
    /// Questions to ask; the stored question set when absent.
    pub questions: Option<Vec<GeneratedQuestion>>,
    pub repeats: Option<u32>,
    pub plan: Option<RepeatPlan>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Finished,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRunStatus {
    pub run_id: String,
    pub state: RunState,
    pub records: usize,
    pub partial: bool,
    /// Category counts and accuracy, present once graded.
    pub summary: Option<Value>,
    pub error: Option<String>,
}

#[derive(Default)]
pub(crate) struct Registry(Mutex<HashMap<String, EvalRunStatus>>);

impl Registry {
    fn set(&self, status: EvalRunStatus) {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(status.run_id.clone(), status);
    }

    fn get(&self, run_id: &str) -> Option<EvalRunStatus> {
        self.0
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .get(run_id)
            .cloned()
    }
}

fn execute(
    agent: &Agent,
    store: &RunStore,
    run_id: &str,
    questions: &[GeneratedQuestion],
    plan: &RepeatPlan,
    parallelism: usize,
) -> Result<EvalRunStatus, EvalError> {
    let run = run_suite(
        questions,
        &AgentClient(agent),
        plan,
        SuiteOptions { parallelism },
    );
    store.save_run(
        run_id,
        &run.records,
        run.partial,
        run.abort_reason.as_deref(),
    )?;
    let gold = store.load_gold()?;
    let summary = if gold.is_empty() {
        None
    } else {
        let conn = agent.pool().handle().open_read_only()?;
        let gold = GoldResults::execute(&gold, agent.guard(), &conn)?;
        let outcomes = grade(&run.records, &gold, DEFAULT_SCALAR_TOLERANCE)?;
        store.save_outcomes(run_id, &outcomes)?;
        Some(summarize(&outcomes).to_report_json())
    };
    Ok(EvalRunStatus {
        run_id: run_id.to_owned(),
        state: RunState::Finished,
        records: run.records.len(),
        partial: run.partial,
        summary,
        error: run.abort_reason,
    })
}

pub(crate) async fn start(State(state): State<Shared>, body: Bytes) -> Response {
    let request: EvalRunRequest = if body.is_empty() {
        EvalRunRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => {
                return error_response(StatusCode::BAD_REQUEST, "invalid_request", e.to_string())
            }
        }
    };
    let Some(agent) = state.agent.clone() else {
        return error_response(
            StatusCode::SERVICE_UNAVAILABLE,
            "database_unavailable",
            "the transit database is not loaded",
        );
    };
    let questions = match request.questions {
        Some(q) => q,
        None => match state.store.load_questions() {
            Ok(q) => q,
            Err(e) => {
                return error_response(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "store_error",
                    e.to_string(),
                )
            }
        },
    };
    if questions.is_empty() {
        return error_response(
            StatusCode::BAD_REQUEST,
            "no_questions",
            "no questions given and none stored",
        );
    }
    let plan = request
        .plan
        .unwrap_or(RepeatPlan::Uniform(request.repeats.unwrap_or(1)));
    let parallelism = request.parallelism.unwrap_or(1);

    let run_id = uuid::Uuid::new_v4().to_string();
    let running = EvalRunStatus {
        run_id: run_id.clone(),
        state: RunState::Running,
        records: 0,
        partial: false,
        summary: None,
        error: None,
    };
    state.eval_runs.set(running);
    let worker = state.clone();
    let id = run_id.clone();
    tokio::task::spawn_blocking(move || {
        let status = execute(&agent, &worker.store, &id, &questions, &plan, parallelism)
            .unwrap_or_else(|e| EvalRunStatus {
                run_id: id.clone(),
                state: RunState::Failed,
                records: 0,
                partial: true,
                summary: None,
                error: Some(e.to_string()),
            });
        worker.eval_runs.set(status);
    });
    (
        StatusCode::ACCEPTED,
        Json(serde_json::json!({ "run_id": run_id })),
    )
        .into_response()
}

pub(crate) async fn status(
    State(state): State<Shared>,
    UrlPath(run_id): UrlPath<String>,
) -> Response {
    match state.eval_runs.get(&run_id) {
        Some(status) => Json(status).into_response(),
        None => error_response(
            StatusCode::NOT_FOUND,
            "unknown_run",
            format!("no evaluation run with id {run_id}"),
        ),
    }
}
