use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::templates::{GeneratedQuestion, TemplateId};
use crate::agent::{Agent, AnswerError};
use crate::api::{ChatRequest, ChatResponse, ErrorBody};
use crate::db::RowSet;
use crate::guard::ValidationReport;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

/// Anything that can answer a chat request.
pub trait ChatClient: Sync {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError>;
}

/// Client of a running chat service.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    base_url: String,
    timeout: Duration,
}

impl HttpChatClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            timeout: Duration::from_secs(90),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl ChatClient for HttpChatClient {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(self.timeout)
            .build()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let response = client
            .post(format!("{}/api/chat", self.base_url))
            .json(request)
            .send()
            .map_err(|e| ClientError::Unreachable(e.to_string()))?;
        let status = response.status();
        let body = response
            .text()
            .map_err(|e| ClientError::Decode(e.to_string()))?;
        if !status.is_success() {
            let body = serde_json::from_str::<ErrorBody>(&body)
                .map(|b| format!("{}: {}", b.code, b.message))
                .unwrap_or(body);
            return Err(ClientError::Status {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_str(&body).map_err(|e| ClientError::Decode(e.to_string()))
    }
}

/// In-process client: every request gets a fresh conversation.
pub struct AgentClient<'a>(pub &'a Agent);

impl ChatClient for AgentClient<'_> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate().map_err(|e| ClientError::Status {
            status: 400,
            body: e.to_string(),
        })?;
        let session = request.session_id.clone().unwrap_or_default();
        let turn = self.0.handle_question(
            &mut crate::agent::Conversation::new(session.clone()),
            &request.message,
        );
        Ok(ChatResponse::from_turn(session, &turn))
    }
}

/// One question asked once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub template_id: TemplateId,
    pub attempt: u32,
    pub question_text: String,
    pub generated_sql: Option<String>,
    pub guard_report: Option<ValidationReport>,
    pub rows: Option<RowSet>,
    pub answer_text: Option<String>,
    pub error: Option<AnswerError>,
    /// Transport-level failure (non-200 status or undecodable body).
    pub transport_error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl RunRecord {
    /// The record with its timestamps zeroed, for reproducibility checks.
    pub fn without_timestamps(&self) -> Self {
        let epoch = DateTime::<Utc>::UNIX_EPOCH;
        Self {
            started_at: epoch,
            finished_at: epoch,
            ..self.clone()
        }
    }

    /// The pipeline produced executed rows.
    pub fn has_result(&self) -> bool {
        self.error.is_none() && self.transport_error.is_none() && self.rows.is_some()
    }
}

/// How many times each question is asked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatPlan {
    Uniform(u32),
    PerQuestion(BTreeMap<String, u32>),
}

impl RepeatPlan {
    pub fn repeats(&self, question_id: &str) -> u32 {
        match self {
            RepeatPlan::Uniform(n) => *n,
            RepeatPlan::PerQuestion(map) => map.get(question_id).copied().unwrap_or(0),
        }
    }

    /// Spreads `total` asks over the questions in order: everyone gets the
    /// integer share and the first `total % len` get one more.
    pub fn distribute(groups: &[(&[GeneratedQuestion], u32)]) -> Self {
        let mut map = BTreeMap::new();
        for (questions, total) in groups {
            if questions.is_empty() {
                continue;
            }
            let n = questions.len() as u32;
            for (i, q) in questions.iter().enumerate() {
                map.insert(q.id.clone(), total / n + u32::from((i as u32) < total % n));
            }
        }
        RepeatPlan::PerQuestion(map)
    }

    pub fn total(&self, questions: &[GeneratedQuestion]) -> u64 {
        questions
            .iter()
            .map(|q| u64::from(self.repeats(&q.id)))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Requests in flight at once; 1 keeps the run strictly sequential.
    pub parallelism: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { parallelism: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub records: Vec<RunRecord>,
    /// The endpoint became unreachable and the run stopped early.
    pub partial: bool,
    pub abort_reason: Option<String>,
}

fn ask(
    client: &dyn ChatClient,
    q: &GeneratedQuestion,
    attempt: u32,
) -> Result<RunRecord, ClientError> {
    let started_at = Utc::now();
    let mut record = RunRecord {
        question_id: q.id.clone(),
        template_id: q.template_id,
        attempt,
        question_text: q.text.clone(),
        generated_sql: None,
        guard_report: None,
        rows: None,
        answer_text: None,
        error: None,
        transport_error: None,
        started_at,
        finished_at: started_at,
    };
    match client.chat(&ChatRequest::new(q.text.clone())) {
        Ok(resp) => {
            record.generated_sql = resp.sql;
            record.guard_report = resp.guard;
            record.rows = resp.rows;
            record.answer_text = Some(resp.answer_text);
            record.error = resp.error;
        }
        Err(ClientError::Unreachable(cause)) => return Err(ClientError::Unreachable(cause)),
        Err(other) => record.transport_error = Some(other.to_string()),
    }
    record.finished_at = Utc::now();
    Ok(record)
}

/// Asks every question `plan` times. Records come back in question order,
/// then attempt order, whatever the parallelism. An unreachable endpoint
/// stops the run and flags it partial.
pub fn run_suite(
    questions: &[GeneratedQuestion],
    client: &dyn ChatClient,
    plan: &RepeatPlan,
    options: SuiteOptions,
) -> SuiteRun {
    let jobs: Vec<(&GeneratedQuestion, u32)> = questions
        .iter()
        .flat_map(|q| (1..=plan.repeats(&q.id)).map(move |a| (q, a)))
        .collect();
    let results: Vec<Mutex<Option<RunRecord>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let reason: Mutex<Option<String>> = Mutex::new(None);

    let worker = || loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(q, attempt)) = jobs.get(i) else {
            break;
        };
        match ask(client, q, attempt) {
            Ok(record) => *results[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(record),
            Err(e) => {
                stop.store(true, Ordering::SeqCst);
                reason
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .get_or_insert(e.to_string());
            }
        }
    };
    let threads = options.parallelism.clamp(1, jobs.len().max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }

    let partial = stop.load(Ordering::SeqCst);
    let records = results
        .into_iter()
        .filter_map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()))
        .collect();
    SuiteRun {
        records,
        partial,
        abort_reason: reason.into_inner().unwrap_or_else(|e| e.into_inner()),
    }
}
