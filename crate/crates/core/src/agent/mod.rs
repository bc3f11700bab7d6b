//! The question pipeline: retrieve exemplars, generate SQL, guard it,
//! execute it, draw a map when asked and write the answer.

mod mapping;
mod synthesis;

use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::catalog::{
    applied_assumptions, describe_database, interpretation_rules, render_prompt_within,
    Annotations, CatalogError, PromptDocument, PromptExemplar, RuleSet,
};
use crate::db::{DatabaseHandle, DbError, ReadPool, RowSet};
use crate::digest::short_digest;
use crate::exemplars::{
    index_path_for, load_exemplars, parse_exemplars, ExampleStore, ExemplarError, SimilarityIndex,
    DEFAULT_EXEMPLARS,
};
use crate::guard::{
    extract_sql, GuardError, GuardOptions, Origin, QueryCandidate, SqlGuard, ValidationReport,
    Verdict,
};
use crate::map::{fetch_route_geometry, to_geo_document, GeoFeatureDocument, MapError};
use crate::provider::{CompletionRequest, Message, ProviderError, Providers, Purpose};

pub use mapping::{
    classify_map_request, classify_map_request_with, requested_direction, resolve_route,
    CLASSIFY_INSTRUCTIONS,
};
pub use synthesis::{
    fallback_text, numbers_grounded, quoted_numbers, synthesis_message, synthesize_answer,
    Synthesis, EMPTY_RESULT_TEXT, SYNTHESIS_INSTRUCTIONS,
};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Database(#[from] DbError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Exemplars(#[from] ExemplarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapClassifier {
    #[default]
    Keywords,
    Provider,
}

/// Pipeline knobs; every field can be set from the service configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Exemplars retrieved per question.
    pub k: usize,
    /// Previous turns replayed in the generation request.
    pub memory_turns: usize,
    pub query_timeout_secs: u64,
    /// Rows handed to the synthesis step.
    pub synthesis_rows: usize,
    /// Row limit injected into unbounded queries; 0 disables it.
    pub row_limit: usize,
    pub repair_rounds: u32,
    pub map_classifier: MapClassifier,
    /// Character budget of the generation prompt; exemplars are dropped
    /// first when it is exceeded.
    pub max_prompt_chars: Option<usize>,
    pub interpretation_rules: bool,
    pub extra_rules: Vec<String>,
    pub pool_size: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            k: crate::exemplars::DEFAULT_K,
            memory_turns: 5,
            query_timeout_secs: 30,
            synthesis_rows: 50,
            row_limit: crate::guard::DEFAULT_CHAT_LIMIT,
            repair_rounds: 1,
            map_classifier: MapClassifier::Keywords,
            max_prompt_chars: None,
            interpretation_rules: true,
            extra_rules: Vec::new(),
            pool_size: 4,
        }
    }
}

impl AgentConfig {
    pub fn guard_options(&self) -> GuardOptions {
        GuardOptions {
            repair_rounds: self.repair_rounds,
            limit: (self.row_limit > 0).then_some(self.row_limit),
        }
    }

    pub fn rule_set(&self) -> RuleSet {
        let mut rules = RuleSet::baseline();
        if !self.interpretation_rules {
            let interp: Vec<String> = interpretation_rules().into_iter().map(|r| r.rule).collect();
            rules.rules.retain(|r| !interp.contains(r));
        }
        rules.rules.extend(self.extra_rules.iter().cloned());
        rules
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tool {
    RetrieveExamples,
    GenerateSql,
    Guard,
    ExecuteSql,
    BuildMap,
    Synthesize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub tool: Tool,
    pub input_digest: String,
    pub output_digest: String,
    pub duration_ms: u64,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

struct Step {
    tool: Tool,
    input_digest: String,
    started: Instant,
}

impl Step {
    fn start(tool: Tool, input: &str) -> Self {
        Self {
            tool,
            input_digest: short_digest(input),
            started: Instant::now(),
        }
    }

    fn finish(self, outcome: Outcome, output: &str, detail: Option<String>) -> ToolInvocation {
        ToolInvocation {
            tool: self.tool,
            input_digest: self.input_digest,
            output_digest: short_digest(output),
            duration_ms: self.started.elapsed().as_millis() as u64,
            outcome,
            detail,
        }
    }

    fn ok(self, output: &str) -> ToolInvocation {
        self.finish(Outcome::Ok, output, None)
    }

    fn err(self, message: impl Into<String>) -> ToolInvocation {
        let message = message.into();
        self.finish(Outcome::Error, &message, Some(message.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    CannotAnswer,
    GenerationFailed,
    ExecutionError,
    ExecutionTimeout,
    ProviderUnavailable,
    ProviderUnconfigured,
    /// The service gave up waiting for the pipeline.
    RequestTimeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerError {
    pub code: ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerPayload {
    pub text: String,
    pub sql: Option<String>,
    pub rows: Option<RowSet>,
    /// Identifier of the map document built for this turn.
    pub map: Option<String>,
    pub assumptions: Vec<String>,
    pub error: Option<AnswerError>,
    pub guard: Option<ValidationReport>,
}

impl AnswerPayload {
    fn failure(code: ErrorCode, text: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            sql: None,
            rows: None,
            map: None,
            assumptions: Vec::new(),
            error: Some(AnswerError {
                code,
                message: message.into(),
            }),
            guard: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub question: String,
    pub tool_trace: Vec<ToolInvocation>,
    pub answer: AnswerPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_document: Option<GeoFeatureDocument>,
    pub asked_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub session_id: String,
    pub turns: Vec<AgentTurn>,
    pub created_at: DateTime<Utc>,
}

impl Conversation {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            turns: Vec::new(),
            created_at: Utc::now(),
        }
    }

    /// Alternating user/assistant messages for the last `depth` turns. The
    /// assistant side is the executed SQL when there was one.
    pub fn memory(&self, depth: usize) -> Vec<Message> {
        let skip = self.turns.len().saturating_sub(depth);
        self.turns[skip..]
            .iter()
            .flat_map(|t| {
                let reply = t
                    .answer
                    .sql
                    .clone()
                    .unwrap_or_else(|| t.answer.text.clone());
                [Message::user(t.question.clone()), Message::assistant(reply)]
            })
            .collect()
    }
}

fn provider_failure(e: &ProviderError) -> AnswerPayload {
    match e {
        ProviderError::Unavailable { .. } => AnswerPayload::failure(
            ErrorCode::ProviderUnavailable,
            "The language model is unavailable at the moment, so I cannot answer this question.",
            e.to_string(),
        ),
        ProviderError::Unconfigured(_) => AnswerPayload::failure(
            ErrorCode::ProviderUnconfigured,
            "No language model is configured, so I cannot answer this question.",
            e.to_string(),
        ),
        _ => AnswerPayload::failure(
            ErrorCode::GenerationFailed,
            "I could not write a query for this question, so I cannot answer it.",
            e.to_string(),
        ),
    }
}

/// Shared, immutable pipeline state. Conversations are owned by callers.
pub struct Agent {
    pool: ReadPool,
    guard: SqlGuard,
    store: ExampleStore,
    providers: Providers,
    rules: RuleSet,
    config: AgentConfig,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("pool", &self.pool)
            .field("providers", &self.providers)
            .finish()
    }
}

impl Agent {
    pub fn new(
        pool: ReadPool,
        guard: SqlGuard,
        store: ExampleStore,
        providers: Providers,
        config: AgentConfig,
    ) -> Self {
        let rules = config.rule_set();
        Self {
            pool,
            guard,
            store,
            providers,
            rules,
            config,
        }
    }

    /// Opens `db_path` read-only, describes it with the builtin annotations
    /// and loads the exemplars (the shipped set when `exemplars` is None).
    pub fn open(
        db_path: &Path,
        exemplars: Option<&Path>,
        providers: Providers,
        config: AgentConfig,
    ) -> Result<Self, AgentError> {
        let handle = DatabaseHandle::new(db_path);
        let conn = handle.open_read_only()?;
        let (catalog, warnings) = describe_database(&conn, &Annotations::builtin())?;
        for w in warnings {
            tracing::warn!("catalog: {w}");
        }
        drop(conn);
        let guard = SqlGuard::new(catalog)?;
        let pairs = match exemplars {
            Some(path) => load_exemplars(path, &guard)?,
            None => parse_exemplars(DEFAULT_EXEMPLARS, &guard)?,
        };
        let pool = ReadPool::open(handle, config.pool_size)?;
        let store = match exemplars.map(index_path_for).filter(|p| p.exists()) {
            Some(index_path) => match SimilarityIndex::load(&index_path) {
                Ok(index) if index.matches(&pairs, &providers.embedding.id()) => {
                    ExampleStore::with_index(pairs, index)
                }
                Ok(_) => {
                    tracing::warn!(
                        "{} was built for other exemplars or another provider; re-embedding",
                        index_path.display()
                    );
                    ExampleStore::new(pairs)
                }
                Err(e) => {
                    tracing::warn!("ignoring exemplar index: {e}");
                    ExampleStore::new(pairs)
                }
            },
            None => ExampleStore::new(pairs),
        };
        Ok(Self::new(pool, guard, store, providers, config))
    }

    pub fn pool(&self) -> &ReadPool {
        &self.pool
    }

    pub fn guard(&self) -> &SqlGuard {
        &self.guard
    }

    pub fn store(&self) -> &ExampleStore {
        &self.store
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn is_map_request(&self, question: &str) -> bool {
        match self.config.map_classifier {
            MapClassifier::Keywords => classify_map_request(question),
            MapClassifier::Provider => {
                classify_map_request_with(question, self.providers.completion.as_ref())
            }
        }
    }

    /// Runs the pipeline for one question, appends the turn to `session`
    /// and returns it. Failures become error answers; nothing escapes.
    pub fn handle_question(&self, session: &mut Conversation, question: &str) -> AgentTurn {
        let asked_at = Utc::now();
        let mut trace = Vec::new();
        let (answer, map_document) = self.run_pipeline(session, question, &mut trace);
        let turn = AgentTurn {
            question: question.to_owned(),
            tool_trace: trace,
            answer,
            map_document,
            asked_at,
        };
        session.turns.push(turn.clone());
        turn
    }

    /// One-off question in a fresh conversation.
    pub fn ask(&self, question: &str) -> AgentTurn {
        self.handle_question(&mut Conversation::new(""), question)
    }

    fn generation_request(
        &self,
        session: &Conversation,
        question: &str,
        exemplars: Vec<PromptExemplar>,
    ) -> CompletionRequest {
        let doc =
            PromptDocument::new(self.guard.catalog(), self.rules.clone()).with_exemplars(exemplars);
        let system = match self.config.max_prompt_chars {
            Some(limit) => render_prompt_within(&doc, limit).0,
            None => crate::catalog::render_prompt(&doc),
        };
        let mut messages = session.memory(self.config.memory_turns);
        messages.push(Message::user(question.to_owned()));
        CompletionRequest::new(Purpose::GenerateSql, system, messages)
    }

    fn run_pipeline(
        &self,
        session: &Conversation,
        question: &str,
        trace: &mut Vec<ToolInvocation>,
    ) -> (AnswerPayload, Option<GeoFeatureDocument>) {
        let completion = self.providers.completion.as_ref();

        let step = Step::start(Tool::RetrieveExamples, question);
        let exemplars =
            match self
                .store
                .top_k(question, self.config.k, self.providers.embedding.as_ref())
            {
                Ok(found) => {
                    let ids: Vec<&str> = found.iter().map(|s| s.exemplar.id.as_str()).collect();
                    trace.push(step.ok(&ids.join(",")));
                    found
                        .into_iter()
                        .map(|s| PromptExemplar {
                            question: s.exemplar.question,
                            sql: s.exemplar.sql,
                            similarity: s.similarity,
                        })
                        .collect()
                }
                Err(e) => {
                    trace.push(step.err(e.to_string()));
                    Vec::new()
                }
            };

        let request = self.generation_request(session, question, exemplars);
        let step = Step::start(
            Tool::GenerateSql,
            &format!("{}\n{}", request.system_prompt, question),
        );
        let generated = match completion.complete(&request) {
            Ok(reply) => {
                let sql = extract_sql(&reply);
                trace.push(step.ok(&sql));
                sql
            }
            Err(e) => {
                trace.push(step.err(e.to_string()));
                return (provider_failure(&e), None);
            }
        };
        let Ok(candidate) = QueryCandidate::new(generated, Origin::Generated) else {
            return (
                AnswerPayload::failure(
                    ErrorCode::GenerationFailed,
                    "I could not write a query for this question, so I cannot answer it.",
                    "the model returned no query",
                ),
                None,
            );
        };

        let step = Step::start(Tool::Guard, &candidate.sql);
        let outcome =
            self.guard
                .validate(&candidate, Some(completion), self.config.guard_options());
        if outcome.report.verdict == Verdict::Rejected {
            let reasons = outcome
                .report
                .errors()
                .map(|d| d.message.clone())
                .collect::<Vec<_>>()
                .join("; ");
            trace.push(step.err(reasons.clone()));
            let mut answer = AnswerPayload::failure(
                ErrorCode::CannotAnswer,
                "I cannot answer this question: I could not write a valid query for it.",
                reasons,
            );
            answer.guard = Some(outcome.report);
            return (answer, None);
        }
        trace.push(step.ok(&outcome.candidate.sql));
        let sql = outcome.candidate.sql.clone();
        let report = outcome.report;

        let step = Step::start(Tool::ExecuteSql, &sql);
        let rows = match self
            .pool
            .query(&sql, Duration::from_secs(self.config.query_timeout_secs))
        {
            Ok(rows) => {
                trace.push(step.ok(&serde_json::to_string(&rows).unwrap_or_default()));
                rows
            }
            Err(e) => {
                trace.push(step.err(e.to_string()));
                let (code, text) = match e {
                    DbError::Timeout(_) => (
                        ErrorCode::ExecutionTimeout,
                        "The query took too long to run, so I cannot answer.",
                    ),
                    _ => (
                        ErrorCode::ExecutionError,
                        "The query failed to run, so I cannot answer.",
                    ),
                };
                let mut answer = AnswerPayload::failure(code, text, e.to_string());
                answer.sql = Some(sql);
                answer.guard = Some(report);
                return (answer, None);
            }
        };

        let mut map_note = None;
        let mut map_document = None;
        if self.is_map_request(question) {
            let step = Step::start(Tool::BuildMap, &format!("{question}\n{sql}"));
            match self.build_map(question, &rows) {
                Ok(doc) => {
                    let json = doc.to_json();
                    trace.push(step.ok(&json));
                    map_document = Some(doc);
                }
                Err(e) => {
                    trace.push(step.err(e.to_string()));
                    map_note = Some(format!("The map could not be drawn: {e}."));
                }
            }
        }

        let step = Step::start(Tool::Synthesize, &format!("{question}\n{sql}"));
        let (mut text, how, err) = synthesize_answer(
            question,
            &sql,
            &rows,
            completion,
            self.config.synthesis_rows,
        );
        match (how, err) {
            (Synthesis::Fallback, Some(e)) => trace.push(step.err(e.to_string())),
            _ => trace.push(step.ok(&text)),
        }
        if let Some(note) = map_note {
            text = format!("{text}\n{note}");
        }

        let answer = AnswerPayload {
            text,
            assumptions: applied_assumptions(&sql),
            sql: Some(sql),
            rows: Some(rows),
            map: map_document.as_ref().map(GeoFeatureDocument::id),
            error: None,
            guard: Some(report),
        };
        (answer, map_document)
    }

    fn build_map(&self, question: &str, rows: &RowSet) -> Result<GeoFeatureDocument, MapError> {
        let conn = self.pool.get();
        let route = resolve_route(&conn, question, rows)?.ok_or(MapError::NoRoute)?;
        let geometry = fetch_route_geometry(&conn, &route, requested_direction(question))?;
        to_geo_document(&geometry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ScriptedProvider;
    use crate::testutil::fixture_db;

    const SCRIPT: &str = r#"
[[rule]]
purpose = "generate_sql"
pattern = "(?i)how many routes are there"
response = "select count(*) from routes"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)drop everything"
response = "DROP TABLE routes"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)nonsense column"
response = "select wibble from routes"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)martian"
response = "select route_short_name from routes where route_short_name = 'X99'"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)map of line (\\w+)"
response = "select distinct agency_id, route_id from route_geometry where route_short_name = '$1' and agency_id = 'tper'"

[[rule]]
purpose = "generate_sql"
pattern = "(?i)which lines"
response = "```sql\nselect route_short_name from routes order by 1;\n```"

[[rule]]
purpose = "synthesize"
pattern = "(?s)how many routes.*count"
response = "There are 8 routes in the database."
"#;

    fn agent(db: &Path, script: &str) -> Agent {
        let providers = Providers::scripted(ScriptedProvider::parse(script).unwrap());
        Agent::open(db, None, providers, AgentConfig::default()).unwrap()
    }

    fn fixture_route_count() -> usize {
        let f = crate::testutil::fixtures().join("feeds");
        ["tper", "atm"]
            .iter()
            .map(|feed| {
                std::fs::read_to_string(f.join(feed).join("routes.txt"))
                    .unwrap()
                    .lines()
                    .skip(1)
                    .filter(|l| !l.trim().is_empty())
                    .count()
            })
            .sum()
    }

    #[test]
    fn count_answer_embeds_fixture_count() {
        let (_dir, db) = fixture_db();
        let turn = agent(&db, SCRIPT).ask("How many routes are there?");
        let expected = fixture_route_count();
        assert!(
            turn.answer.text.contains(&expected.to_string()),
            "{}",
            turn.answer.text
        );
        assert_eq!(
            turn.answer.rows.as_ref().unwrap().scalar(),
            Some(&crate::db::Cell::Integer(expected as i64))
        );
        let tools: Vec<Tool> = turn.tool_trace.iter().map(|t| t.tool).collect();
        assert_eq!(
            tools,
            [
                Tool::RetrieveExamples,
                Tool::GenerateSql,
                Tool::Guard,
                Tool::ExecuteSql,
                Tool::Synthesize
            ]
        );
        assert!(turn.answer.error.is_none());
    }

    #[test]
    fn rejected_query_cannot_answer() {
        let (_dir, db) = fixture_db();
        let a = agent(&db, SCRIPT);
        for q in ["Drop everything please", "Show the nonsense column"] {
            let turn = a.ask(q);
            let err = turn.answer.error.as_ref().unwrap();
            assert_eq!(err.code, ErrorCode::CannotAnswer);
            assert!(turn.answer.text.contains("cannot answer"));
            assert_eq!(
                turn.answer.guard.as_ref().unwrap().verdict,
                Verdict::Rejected
            );
            assert!(turn.answer.rows.is_none());
            assert_eq!(turn.tool_trace.last().unwrap().outcome, Outcome::Error);
        }
    }

    #[test]
    fn empty_result_is_reported() {
        let (_dir, db) = fixture_db();
        let turn = agent(&db, SCRIPT).ask("Which martian routes exist?");
        assert!(turn.answer.text.starts_with("No results found"));
        assert!(turn.answer.rows.as_ref().unwrap().is_empty());
    }

    #[test]
    fn unmatched_generation_is_an_error_answer() {
        let (_dir, db) = fixture_db();
        let turn = agent(&db, SCRIPT).ask("Something the script does not know");
        assert_eq!(
            turn.answer.error.as_ref().unwrap().code,
            ErrorCode::GenerationFailed
        );
        assert_eq!(turn.tool_trace.len(), 2);
    }

    #[test]
    fn unconfigured_provider_reports_it() {
        let (_dir, db) = fixture_db();
        let stub = std::sync::Arc::new(crate::provider::UnconfiguredProvider {
            reason: "no key".into(),
        });
        let a = Agent::open(
            &db,
            None,
            Providers {
                completion: stub.clone(),
                embedding: stub,
            },
            AgentConfig::default(),
        )
        .unwrap();
        let turn = a.ask("How many routes are there?");
        assert_eq!(
            turn.answer.error.as_ref().unwrap().code,
            ErrorCode::ProviderUnconfigured
        );
        assert_eq!(turn.tool_trace[0].outcome, Outcome::Error);
    }

    #[test]
    fn fallback_when_synthesis_is_unscripted() {
        let (_dir, db) = fixture_db();
        let turn = agent(&db, SCRIPT).ask("Which lines exist?");
        let rows = turn.answer.rows.as_ref().unwrap();
        assert_eq!(rows.len(), 8);
        assert!(
            turn.answer
                .text
                .starts_with("The query returned: 11, 18, 18"),
            "{}",
            turn.answer.text
        );
        assert!(turn.answer.sql.as_ref().unwrap().ends_with("limit 50"));
    }

    #[test]
    fn map_request_builds_document() {
        let (_dir, db) = fixture_db();
        let turn = agent(&db, SCRIPT).ask("Draw the map of line 18");
        let doc = turn.map_document.as_ref().expect("map built");
        assert_eq!(turn.answer.map.as_deref(), Some(doc.id().as_str()));
        assert_eq!(doc.features[0].properties["agency_id"], "tper");
        assert!(turn
            .tool_trace
            .iter()
            .any(|t| t.tool == Tool::BuildMap && t.outcome == Outcome::Ok));
    }

    #[test]
    fn memory_replays_previous_turns() {
        let (_dir, db) = fixture_db();
        let a = agent(&db, SCRIPT);
        let mut conv = Conversation::new("s1");
        for _ in 0..7 {
            a.handle_question(&mut conv, "How many routes are there?");
        }
        let memory = conv.memory(5);
        assert_eq!(memory.len(), 10);
        assert!(memory
            .iter()
            .step_by(2)
            .all(|m| m.role == crate::provider::Role::User));
        assert!(memory[1].content.starts_with("select count(*)"));
    }

    #[test]
    fn deterministic_across_runs() {
        let (_dir, db) = fixture_db();
        let a = agent(&db, SCRIPT);
        let strip = |t: AgentTurn| {
            (
                t.answer,
                t.tool_trace
                    .into_iter()
                    .map(|s| (s.tool, s.input_digest, s.output_digest))
                    .collect::<Vec<_>>(),
            )
        };
        assert_eq!(
            strip(a.ask("Which lines exist?")),
            strip(a.ask("Which lines exist?"))
        );
    }
}
