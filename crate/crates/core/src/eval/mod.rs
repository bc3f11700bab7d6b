//! Offline evaluation: template expansion, suite runs against the chat API,
//! grading against gold queries and summaries.

mod compare;
mod runner;
mod store;
mod summary;
mod templates;

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use crate::db::{query_rows, DbError, RowSet};
use crate::guard::{Origin, QueryCandidate, SqlGuard};

pub use compare::{
    compare_result_sets, compare_scalar, scalar_of, Category, ComparisonOutcome, NotScalar,
    DEFAULT_SCALAR_TOLERANCE,
};
pub use runner::{
    run_suite, AgentClient, ChatClient, ClientError, HttpChatClient, RepeatPlan, RunRecord,
    SuiteOptions, SuiteRun,
};
pub use store::RunStore;
pub use summary::{summarize, template_family, CategoryCounts, GradedOutcome, MetricsSummary};
pub use templates::{
    expand_templates, expand_with_pool, gold_sql, question_text, render_pattern, template,
    AnswerKind, BindingPool, Day, ExpandConfig, GeneratedQuestion, ParaphraseMode,
    QuestionTemplate, Rider, TemplateId, TEMPLATES,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("gold query for {question_id} is invalid: {reason}")]
    InvalidGold { question_id: String, reason: String },
    #[error("no gold query for question {0}")]
    MissingGold(String),
    #[error("malformed record: {0}")]
    Format(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Database(#[from] rusqlite::Error),
    #[error(transparent)]
    Query(#[from] DbError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub question_id: String,
    pub gold_sql: String,
    pub expected_kind: AnswerKind,
}

/// Draft gold entries written from each question's bindings; meant to be
/// reviewed by hand before grading.
pub fn draft_gold(questions: &[GeneratedQuestion]) -> Vec<GoldEntry> {
    questions
        .iter()
        .map(|q| GoldEntry {
            question_id: q.id.clone(),
            gold_sql: gold_sql(q),
            expected_kind: q.answer_kind(),
        })
        .collect()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| EvalError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EvalError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EvalError::Format(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|source| EvalError::Io {
        path: path.to_owned(),
        source,
    })
}

const GOLD_TIMEOUT: Duration = Duration::from_secs(60);

/// Gold queries checked by the guard and executed once each.
#[derive(Debug, Clone)]
pub struct GoldResults {
    pub entries: HashMap<String, (GoldEntry, RowSet)>,
}

impl GoldResults {
    pub fn execute(
        gold: &[GoldEntry],
        guard: &SqlGuard,
        conn: &Connection,
    ) -> Result<Self, EvalError> {
        let mut entries = HashMap::new();
        for g in gold {
            let invalid = |reason: String| EvalError::InvalidGold {
                question_id: g.question_id.clone(),
                reason,
            };
            let candidate = QueryCandidate::new(g.gold_sql.clone(), Origin::Gold)
                .map_err(|e| invalid(e.to_string()))?;
            let report = guard.check(&candidate);
            if report.is_rejected() {
                return Err(invalid(
                    report
                        .errors()
                        .map(|d| d.message.clone())
                        .collect::<Vec<_>>()
                        .join("; "),
                ));
            }
            let rows =
                query_rows(conn, &g.gold_sql, GOLD_TIMEOUT).map_err(|e| invalid(e.to_string()))?;
            if g.expected_kind == AnswerKind::Scalar && scalar_of(&rows).is_err() {
                return Err(invalid("a scalar gold query must return one value".into()));
            }
            entries.insert(g.question_id.clone(), (g.clone(), rows));
        }
        Ok(Self { entries })
    }
}

/// Grades one attempt. Attempts without executed rows are syntax errors.
pub fn grade_record(
    record: &RunRecord,
    gold: &GoldEntry,
    gold_rows: &RowSet,
    tolerance: f64,
) -> ComparisonOutcome {
    let Some(rows) = record.rows.as_ref().filter(|_| record.has_result()) else {
        return ComparisonOutcome::of(Category::SyntaxError);
    };
    match gold.expected_kind {
        AnswerKind::EntityList => compare_result_sets(gold_rows, rows),
        AnswerKind::Scalar => {
            let expected = scalar_of(gold_rows).ok().flatten().unwrap_or(0.0);
            match scalar_of(rows) {
                Ok(value) => compare_scalar(expected, value, tolerance),
                Err(NotScalar) => ComparisonOutcome::of(Category::WrongShape),
            }
        }
    }
}

pub fn grade(
    records: &[RunRecord],
    gold: &GoldResults,
    tolerance: f64,
) -> Result<Vec<GradedOutcome>, EvalError> {
    records
        .iter()
        .map(|r| {
            let (entry, rows) = gold
                .entries
                .get(&r.question_id)
                .ok_or_else(|| EvalError::MissingGold(r.question_id.clone()))?;
            Ok(GradedOutcome {
                question_id: r.question_id.clone(),
                template_id: r.template_id.as_str().to_owned(),
                attempt: r.attempt,
                outcome: grade_record(r, entry, rows, tolerance),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{describe_database, Annotations};
    use crate::testutil::fixture_db;

    #[test]
    fn drafted_gold_passes_guard_and_runs() {
        let (_dir, db) = fixture_db();
        let conn = crate::db::open_read_only(&db).unwrap();
        let (catalog, _) = describe_database(&conn, &Annotations::builtin()).unwrap();
        let guard = SqlGuard::new(catalog).unwrap();
        for p in [0.0, 1.0] {
            let cfg = ExpandConfig {
                rider_probability: p,
                invalid_probability: 0.5,
                ..Default::default()
            };
            let qs = expand_templates(&conn, &cfg, None).unwrap();
            let gold = GoldResults::execute(&draft_gold(&qs), &guard, &conn).unwrap();
            assert_eq!(gold.entries.len(), qs.len());
            for q in qs.iter().filter(|q| q.injected_invalid) {
                assert_eq!(
                    scalar_of(&gold.entries[&q.id].1),
                    Ok(Some(0.0)),
                    "{}",
                    q.text
                );
            }
        }
    }

    #[test]
    fn failed_attempts_are_syntax_errors() {
        let gold = GoldEntry {
            question_id: "q".into(),
            gold_sql: "select 1".into(),
            expected_kind: AnswerKind::Scalar,
        };
        let rows = RowSet {
            columns: vec!["v".into()],
            data: vec![vec![crate::db::Cell::Integer(1)]],
        };
        let epoch = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
        let mut record = RunRecord {
            question_id: "q".into(),
            template_id: TemplateId::T3,
            attempt: 1,
            question_text: "q".into(),
            generated_sql: None,
            guard_report: None,
            rows: None,
            answer_text: Some("I cannot answer".into()),
            error: None,
            transport_error: None,
            started_at: epoch,
            finished_at: epoch,
        };
        assert_eq!(
            grade_record(&record, &gold, &rows, 1e-6).category,
            Category::SyntaxError
        );
        record.rows = Some(rows.clone());
        assert_eq!(
            grade_record(&record, &gold, &rows, 1e-6).category,
            Category::ScalarExact
        );
    }
}
