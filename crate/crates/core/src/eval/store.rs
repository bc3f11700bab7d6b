use std::path::Path;
use std::sync::{Mutex, MutexGuard};

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension};

use super::runner::RunRecord;
use super::summary::GradedOutcome;
use super::templates::GeneratedQuestion;
use super::{EvalError, GoldEntry};
use crate::agent::{AgentTurn, Conversation};

const STORE_SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS sessions (
    session_id TEXT PRIMARY KEY,
    created_at TEXT NOT NULL,
    last_active TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS turns (
    session_id TEXT NOT NULL REFERENCES sessions(session_id) ON DELETE CASCADE,
    turn_index INTEGER NOT NULL,
    question TEXT NOT NULL,
    payload TEXT NOT NULL,
    asked_at TEXT NOT NULL,
    PRIMARY KEY (session_id, turn_index)
);
CREATE TABLE IF NOT EXISTS maps (
    map_id TEXT PRIMARY KEY,
    document TEXT NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS questions (
    question_id TEXT PRIMARY KEY,
    template_id TEXT NOT NULL,
    payload TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS gold (
    question_id TEXT PRIMARY KEY,
    gold_sql TEXT NOT NULL,
    expected_kind TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS runs (
    run_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    question_id TEXT NOT NULL,
    attempt INTEGER NOT NULL,
    payload TEXT NOT NULL,
    started_at TEXT NOT NULL,
    finished_at TEXT NOT NULL,
    PRIMARY KEY (run_id, seq)
);
CREATE TABLE IF NOT EXISTS run_meta (
    run_id TEXT PRIMARY KEY,
    created_at TEXT NOT NULL,
    partial INTEGER NOT NULL,
    note TEXT
);
CREATE TABLE IF NOT EXISTS outcomes (
    run_id TEXT NOT NULL,
    question_id TEXT NOT NULL,
    attempt INTEGER NOT NULL,
    template_id TEXT NOT NULL,
    category TEXT NOT NULL,
    fp_rate REAL,
    fn_rate REAL,
    scalar_delta REAL,
    payload TEXT NOT NULL,
    PRIMARY KEY (run_id, question_id, attempt)
);
";

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, EvalError> {
    serde_json::from_str(text).map_err(|e| EvalError::Format(e.to_string()))
}

/// Sessions, maps and evaluation records, kept apart from the transit data.
pub struct RunStore {
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for RunStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunStore").finish_non_exhaustive()
    }
}

impl RunStore {
    pub fn open(path: &Path) -> Result<Self, EvalError> {
        Self::init(Connection::open(path)?)
    }

    pub fn in_memory() -> Result<Self, EvalError> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> Result<Self, EvalError> {
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch("PRAGMA foreign_keys = ON;")?;
        conn.execute_batch(STORE_SCHEMA)?;
        Ok(Self {
            conn: Mutex::new(conn),
        })
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn save_session(
        &self,
        session: &Conversation,
        last_active: DateTime<Utc>,
    ) -> Result<(), EvalError> {
        self.conn().execute(
            "INSERT INTO sessions (session_id, created_at, last_active) VALUES (?1, ?2, ?3)
             ON CONFLICT(session_id) DO UPDATE SET last_active = excluded.last_active",
            params![
                session.session_id,
                session.created_at.to_rfc3339(),
                last_active.to_rfc3339()
            ],
        )?;
        Ok(())
    }

    pub fn append_turn(
        &self,
        session_id: &str,
        index: usize,
        turn: &AgentTurn,
    ) -> Result<(), EvalError> {
        self.conn().execute(
            "INSERT OR REPLACE INTO turns (session_id, turn_index, question, payload, asked_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![session_id, index as i64, turn.question, json(turn), turn.asked_at.to_rfc3339()],
        )?;
        Ok(())
    }

    pub fn load_conversation(&self, session_id: &str) -> Result<Option<Conversation>, EvalError> {
        let conn = self.conn();
        let created: Option<String> = conn
            .query_row(
                "SELECT created_at FROM sessions WHERE session_id = ?1",
                params![session_id],
                |r| r.get(0),
            )
            .optional()?;
        let Some(created) = created else {
            return Ok(None);
        };
        let created_at = DateTime::parse_from_rfc3339(&created)
            .map_err(|e| EvalError::Format(e.to_string()))?
            .with_timezone(&Utc);
        let mut stmt =
            conn.prepare("SELECT payload FROM turns WHERE session_id = ?1 ORDER BY turn_index")?;
        let payloads = stmt
            .query_map(params![session_id], |r| r.get::<_, String>(0))?
            .collect::<Result<Vec<_>, _>>()?;
        let turns = payloads
            .iter()
            .map(|p| parse(p))
            .collect::<Result<Vec<AgentTurn>, _>>()?;
        Ok(Some(Conversation {
            session_id: session_id.to_owned(),
            turns,
            created_at,
        }))
    }

    /// Deletes sessions idle since before `cutoff`; returns how many.
    pub fn expire_sessions(&self, cutoff: DateTime<Utc>) -> Result<usize, EvalError> {
        Ok(self.conn().execute(
            "DELETE FROM sessions WHERE last_active < ?1",
            params![cutoff.to_rfc3339()],
        )?)
    }

    pub fn put_map(&self, map_id: &str, document: &str) -> Result<(), EvalError> {
        self.conn().execute(
            "INSERT OR IGNORE INTO maps (map_id, document, created_at) VALUES (?1, ?2, ?3)",
            params![map_id, document, Utc::now().to_rfc3339()],
        )?;
        Ok(())
    }

    pub fn get_map(&self, map_id: &str) -> Result<Option<String>, EvalError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT document FROM maps WHERE map_id = ?1",
                params![map_id],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn save_questions(&self, questions: &[GeneratedQuestion]) -> Result<(), EvalError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        for q in questions {
            tx.execute(
                "INSERT OR REPLACE INTO questions (question_id, template_id, payload) VALUES (?1, ?2, ?3)",
                params![q.id, q.template_id.as_str(), json(q)],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_questions(&self) -> Result<Vec<GeneratedQuestion>, EvalError> {
        let conn = self.conn();
        let mut stmt = conn.prepare("SELECT payload FROM questions ORDER BY rowid")?;
        let payloads = stmt
            .query_map([], |r| r.get::<_, String>(0))?
            .collect::<Result<Vec<_>, _>>()?;
        payloads.iter().map(|p| parse(p)).collect()
    }

    pub fn save_gold(&self, gold: &[GoldEntry]) -> Result<(), EvalError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        for g in gold {
            tx.execute(
                "INSERT OR REPLACE INTO gold (question_id, gold_sql, expected_kind) VALUES (?1, ?2, ?3)",
                params![g.question_id, g.gold_sql, json(&g.expected_kind).trim_matches('"')],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_gold(&self) -> Result<Vec<GoldEntry>, EvalError> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT question_id, gold_sql, expected_kind FROM gold ORDER BY rowid")?;
        let rows = stmt
            .query_map([], |r| {
                Ok((
                    r.get::<_, String>(0)?,
                    r.get::<_, String>(1)?,
                    r.get::<_, String>(2)?,
                ))
            })?
            .collect::<Result<Vec<_>, _>>()?;
        rows.into_iter()
            .map(|(question_id, gold_sql, kind)| {
                Ok(GoldEntry {
                    question_id,
                    gold_sql,
                    expected_kind: parse(&format!("\"{kind}\""))?,
                })
            })
            .collect()
    }

    pub fn save_run(
        &self,
        run_id: &str,
        records: &[RunRecord],
        partial: bool,
        note: Option<&str>,
    ) -> Result<(), EvalError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute(
            "INSERT OR REPLACE INTO run_meta (run_id, created_at, partial, note) VALUES (?1, ?2, ?3, ?4)",
            params![run_id, Utc::now().to_rfc3339(), partial, note],
        )?;
        tx.execute("DELETE FROM runs WHERE run_id = ?1", params![run_id])?;
        for (seq, r) in records.iter().enumerate() {
            tx.execute(
                "INSERT INTO runs (run_id, seq, question_id, attempt, payload, started_at, finished_at)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                params![
                    run_id,
                    seq as i64,
                    r.question_id,
                    r.attempt,
                    json(r),
                    r.started_at.to_rfc3339(),
                    r.finished_at.to_rfc3339()
                ],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_run(&self, run_id: &str) -> Result<Vec<RunRecord>, EvalError> {
        let conn = self.conn();
        let mut stmt = conn.prepare("SELECT payload FROM runs WHERE run_id = ?1 ORDER BY seq")?;
        let payloads = stmt
            .query_map(params![run_id], |r| r.get::<_, String>(0))?
            .collect::<Result<Vec<_>, _>>()?;
        payloads.iter().map(|p| parse(p)).collect()
    }

    /// Whether the run stopped early.
    pub fn run_partial(&self, run_id: &str) -> Result<Option<bool>, EvalError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT partial FROM run_meta WHERE run_id = ?1",
                params![run_id],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn latest_run_id(&self) -> Result<Option<String>, EvalError> {
        Ok(self
            .conn()
            .query_row(
                "SELECT run_id FROM run_meta ORDER BY created_at DESC, rowid DESC LIMIT 1",
                [],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn save_outcomes(&self, run_id: &str, outcomes: &[GradedOutcome]) -> Result<(), EvalError> {
        let mut conn = self.conn();
        let tx = conn.transaction()?;
        tx.execute("DELETE FROM outcomes WHERE run_id = ?1", params![run_id])?;
        for o in outcomes {
            tx.execute(
                "INSERT INTO outcomes (run_id, question_id, attempt, template_id, category, fp_rate, fn_rate, scalar_delta, payload)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)",
                params![
                    run_id,
                    o.question_id,
                    o.attempt,
                    o.template_id,
                    o.outcome.category.as_str(),
                    o.outcome.fp_rate,
                    o.outcome.fn_rate,
                    o.outcome.scalar_delta,
                    json(o)
                ],
            )?;
        }
        tx.commit()?;
        Ok(())
    }

    pub fn load_outcomes(&self, run_id: &str) -> Result<Vec<GradedOutcome>, EvalError> {
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT payload FROM outcomes WHERE run_id = ?1 ORDER BY rowid")?;
        let payloads = stmt
            .query_map(params![run_id], |r| r.get::<_, String>(0))?
            .collect::<Result<Vec<_>, _>>()?;
        payloads.iter().map(|p| parse(p)).collect()
    }
}
