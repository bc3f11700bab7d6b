//! Validation and repair of generated SQL before it touches the database.
//!
//! Checks run in a fixed order: read-only enforcement, deterministic repair
//! rules, name/type resolution against the catalog, and at most a bounded
//! number of model-assisted repair rounds. Every decision depends only on the
//! query text and the catalog.

pub mod lexer;
mod repair;
mod resolve;

use std::sync::Mutex;

use regex::Regex;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use sqlparser::ast::{SetExpr, Statement};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::{Parser, ParserError};

use crate::catalog::Catalog;
use crate::provider::{CompletionProvider, CompletionRequest, Message, Purpose};

pub use repair::{apply_repair_rules, inject_limit, RepairRule, DIRECTION_LITERAL, REPAIR_RULES};
pub use resolve::KNOWN_FUNCTIONS;

/// Row limit added to chat queries that have none.
pub const DEFAULT_CHAT_LIMIT: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum GuardError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("model repair failed: {cause}")]
    RepairFailed {
        cause: String,
        report: Option<ValidationReport>,
    },
    #[error("cannot build the validation database: {0}")]
    Backstop(#[from] rusqlite::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    Repaired,
    Gold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCandidate {
    pub sql: String,
    pub origin: Origin,
}

impl QueryCandidate {
    pub fn new(sql: impl Into<String>, origin: Origin) -> Result<Self, GuardError> {
        let sql = sql.into();
        if sql.trim().is_empty() {
            return Err(GuardError::EmptyQuery);
        }
        Ok(Self { sql, origin })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Repaired,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    ParseError,
    NonSelect,
    MultipleStatements,
    ForbiddenFunction,
    UnknownTable,
    UnknownAlias,
    UnknownColumn,
    AmbiguousColumn,
    TypeMismatch,
    UnknownFunction,
    SqlError,
}

impl DiagnosticCode {
    /// Problems a rewrite of the query could fix, as opposed to attempts to
    /// run something other than a single read.
    pub fn is_repairable(self) -> bool {
        !matches!(
            self,
            DiagnosticCode::NonSelect
                | DiagnosticCode::MultipleStatements
                | DiagnosticCode::ForbiddenFunction
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Byte range in the query text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    pub span: TextSpan,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn error(code: DiagnosticCode, message: impl Into<String>, span: TextSpan) -> Self {
        Self {
            code,
            message: message.into(),
            span,
            severity: Severity::Error,
        }
    }

    pub fn warning(code: DiagnosticCode, message: impl Into<String>, span: TextSpan) -> Self {
        Self {
            code,
            message: message.into(),
            span,
            severity: Severity::Warning,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub applied_rules: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn accepted() -> Self {
        Self {
            verdict: Verdict::Accepted,
            applied_rules: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let verdict = if diagnostics.iter().any(|d| d.severity == Severity::Error) {
            Verdict::Rejected
        } else {
            Verdict::Accepted
        };
        Self {
            verdict,
            applied_rules: Vec::new(),
            diagnostics,
        }
    }

    pub fn is_rejected(&self) -> bool {
        self.verdict == Verdict::Rejected
    }

    pub fn errors(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(|d| d.severity == Severity::Error)
    }

    pub fn has_code(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }

    pub fn is_repairable(&self) -> bool {
        self.is_rejected() && self.errors().all(|d| d.code.is_repairable())
    }
}

pub(crate) fn parse(sql: &str) -> Result<Vec<Statement>, ParserError> {
    Parser::parse_sql(&SQLiteDialect {}, sql)
}

fn whole(sql: &str) -> TextSpan {
    TextSpan {
        start: 0,
        end: sql.len(),
    }
}

fn parse_error(sql: &str, err: &ParserError) -> Diagnostic {
    let message = err.to_string();
    // "... at Line: 1, Column: 8"
    let re = Regex::new(r"Line: (\d+), Column: (\d+)").expect("static regex");
    let span = re
        .captures(&message)
        .and_then(|c| {
            let line: usize = c[1].parse().ok()?;
            let col: usize = c[2].parse().ok()?;
            let line_start = sql
                .split_inclusive('\n')
                .take(line.saturating_sub(1))
                .map(str::len)
                .sum::<usize>();
            let rest = &sql[line_start..];
            let start = line_start
                + rest
                    .char_indices()
                    .nth(col.saturating_sub(1))
                    .map_or(rest.len(), |(i, _)| i);
            Some(TextSpan { start, end: start })
        })
        .unwrap_or_else(|| whole(sql));
    Diagnostic::error(DiagnosticCode::ParseError, message, span)
}

fn body_kind(body: &SetExpr) -> Option<&'static str> {
    match body {
        SetExpr::Select(s) if s.into.is_some() => Some("SELECT INTO"),
        SetExpr::Select(_) | SetExpr::Values(_) | SetExpr::Table(_) => None,
        SetExpr::Query(q) => query_kind(q),
        SetExpr::SetOperation { left, right, .. } => body_kind(left).or_else(|| body_kind(right)),
        SetExpr::Insert(_) => Some("INSERT"),
        SetExpr::Update(_) => Some("UPDATE"),
        SetExpr::Delete(_) => Some("DELETE"),
        SetExpr::Merge(_) => Some("MERGE"),
    }
}

/// Names the first non-read construct of a query, if any.
fn query_kind(q: &sqlparser::ast::Query) -> Option<&'static str> {
    if !q.locks.is_empty() {
        return Some("SELECT ... FOR UPDATE");
    }
    q.with
        .iter()
        .flat_map(|w| &w.cte_tables)
        .find_map(|cte| query_kind(&cte.query))
        .or_else(|| body_kind(&q.body))
}

const FORBIDDEN_FUNCTIONS: &[&str] = &[
    "load_extension",
    "readfile",
    "writefile",
    "edit",
    "fts3_tokenizer",
];

fn forbidden_call(sql: &str) -> Option<Diagnostic> {
    let toks: Vec<lexer::Token> = lexer::tokenize(sql)
        .into_iter()
        .filter(|t| !t.is_trivia())
        .collect();
    toks.windows(2).find_map(|w| {
        let name = w[0].word(sql).to_ascii_lowercase();
        (w[0].kind == lexer::TokenKind::Word
            && w[1].text(sql) == "("
            && FORBIDDEN_FUNCTIONS.contains(&name.as_str()))
        .then(|| {
            Diagnostic::error(
                DiagnosticCode::ForbiddenFunction,
                format!("function `{name}` is not allowed"),
                TextSpan {
                    start: w[0].start,
                    end: w[0].end,
                },
            )
        })
    })
}

/// Accepts exactly one read-only SELECT statement (CTEs allowed).
pub fn enforce_read_only(q: &QueryCandidate) -> ValidationReport {
    let sql = &q.sql;
    let statements = match parse(sql) {
        Ok(s) => s,
        Err(e) => return ValidationReport::from_diagnostics(vec![parse_error(sql, &e)]),
    };
    let diagnostic = match statements.as_slice() {
        [] => Some(Diagnostic::error(
            DiagnosticCode::ParseError,
            "no statement found",
            whole(sql),
        )),
        [Statement::Query(query)] => query_kind(query)
            .map(|kind| {
                Diagnostic::error(
                    DiagnosticCode::NonSelect,
                    format!("{kind} is not a read-only query"),
                    whole(sql),
                )
            })
            .or_else(|| forbidden_call(sql)),
        [single] => {
            let text = single.to_string();
            let kind: String = text
                .split_whitespace()
                .take(2)
                .collect::<Vec<_>>()
                .join(" ");
            Some(Diagnostic::error(
                DiagnosticCode::NonSelect,
                format!("only SELECT statements may run, found `{kind}`"),
                whole(sql),
            ))
        }
        many => Some(Diagnostic::error(
            DiagnosticCode::MultipleStatements,
            format!("expected one statement, found {}", many.len()),
            whole(sql),
        )),
    };
    ValidationReport::from_diagnostics(diagnostic.into_iter().collect())
}

fn classify_sqlite_error(message: &str) -> DiagnosticCode {
    if message.contains("no such column") {
        DiagnosticCode::UnknownColumn
    } else if message.contains("no such table") {
        DiagnosticCode::UnknownTable
    } else if message.contains("ambiguous column name") {
        DiagnosticCode::AmbiguousColumn
    } else if message.contains("no such function") {
        DiagnosticCode::UnknownFunction
    } else {
        DiagnosticCode::SqlError
    }
}

/// Runtime knobs of [`SqlGuard::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuardOptions {
    /// Model repair rounds allowed after the deterministic rules.
    pub repair_rounds: u32,
    /// Row limit to inject; `None` leaves the query unbounded.
    pub limit: Option<usize>,
}

impl Default for GuardOptions {
    fn default() -> Self {
        Self {
            repair_rounds: 1,
            limit: Some(DEFAULT_CHAT_LIMIT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuardOutcome {
    /// Final text; only executable when the verdict is not rejected.
    pub candidate: QueryCandidate,
    pub report: ValidationReport,
}

impl GuardOutcome {
    pub fn executable(&self) -> Option<&QueryCandidate> {
        (!self.report.is_rejected()).then_some(&self.candidate)
    }
}

/// Instructions for the repair prompt; the common error classes seen in
/// generated queries.
pub const REPAIR_INSTRUCTIONS: &str = "You fix SQLite queries over a GTFS database. \
The query below was rejected by a checker. Common errors are: \
table aliases used without being declared in the FROM clause, or declared for a different table; \
columns that do not exist in the referenced table; \
comparing columns with values of a different type, for instance trips.direction holds the strings \
'andata' (outbound) and 'ritorno' (inbound) and never integers; \
arrival and departure times are integer seconds after midnight. \
Reply with the corrected query only, as a single SELECT statement.";

/// Strips markdown fences and surrounding prose from a model reply.
pub fn extract_sql(reply: &str) -> String {
    let fence = Regex::new(r"(?s)```(?:sql|sqlite)?\s*\n?(.*?)```").expect("static regex");
    let body = fence
        .captures(reply)
        .map_or(reply, |c| c.get(1).unwrap().as_str());
    body.trim().trim_end_matches(';').trim().to_owned()
}

/// Validator bound to one catalog.
pub struct SqlGuard {
    catalog: Catalog,
    schema_sql: String,
    backstop: Mutex<Connection>,
}

impl std::fmt::Debug for SqlGuard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqlGuard")
            .field("tables", &self.catalog.tables.len())
            .finish()
    }
}

impl SqlGuard {
    /// Builds an empty in-memory copy of the schema used to confirm that
    /// accepted queries compile.
    pub fn new(catalog: Catalog) -> Result<Self, GuardError> {
        let conn = Connection::open_in_memory()?;
        let schema_sql = catalog.schema_sql();
        conn.execute_batch(&schema_sql)?;
        Ok(Self {
            catalog,
            schema_sql,
            backstop: Mutex::new(conn),
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Resolves tables, aliases and columns against the catalog and checks
    /// literal/column type agreement, then compiles the query against an
    /// empty copy of the schema.
    pub fn syntax_check(&self, q: &QueryCandidate) -> ValidationReport {
        let sql = &q.sql;
        let statements = match parse(sql) {
            Ok(s) => s,
            Err(e) => return ValidationReport::from_diagnostics(vec![parse_error(sql, &e)]),
        };
        let [Statement::Query(query)] = statements.as_slice() else {
            return enforce_read_only(q);
        };
        let mut resolver = resolve::Resolver::new(&self.catalog, sql);
        resolver.check_query(query);
        let mut diagnostics = resolver.diagnostics;
        if diagnostics.iter().all(|d| d.severity == Severity::Warning) {
            let conn = self.backstop.lock().unwrap_or_else(|p| p.into_inner());
            let prepared = conn.prepare(sql).map(|stmt| stmt.readonly());
            drop(conn);
            match prepared {
                Ok(false) => diagnostics.push(Diagnostic::error(
                    DiagnosticCode::NonSelect,
                    "statement would modify the database",
                    whole(sql),
                )),
                Ok(true) => {}
                Err(e) => {
                    let message = e.to_string();
                    let code = classify_sqlite_error(&message);
                    if code == DiagnosticCode::UnknownFunction {
                        if !diagnostics.iter().any(|d| d.code == code) {
                            diagnostics.push(Diagnostic::warning(code, message, whole(sql)));
                        }
                    } else {
                        diagnostics.push(Diagnostic::error(code, message, whole(sql)));
                    }
                }
            }
        }
        ValidationReport::from_diagnostics(diagnostics)
    }

    /// Read-only enforcement followed by [`syntax_check`](Self::syntax_check).
    pub fn check(&self, q: &QueryCandidate) -> ValidationReport {
        let ro = enforce_read_only(q);
        if ro.is_rejected() {
            return ro;
        }
        self.syntax_check(q)
    }

    /// One round of model-assisted repair. The rewritten query must pass the
    /// read-only and syntax checks.
    pub fn llm_repair(
        &self,
        q: &QueryCandidate,
        diagnostics: &[Diagnostic],
        provider: &dyn CompletionProvider,
    ) -> Result<QueryCandidate, GuardError> {
        let mut problems = String::new();
        for d in diagnostics.iter().filter(|d| d.severity == Severity::Error) {
            problems.push_str(&format!(
                "- {}: {}\n",
                serde_json::to_value(d.code).unwrap().as_str().unwrap_or(""),
                d.message
            ));
        }
        let system = format!("{REPAIR_INSTRUCTIONS}\n\nSchema:\n{}", self.schema_sql);
        let user = format!("Query:\n{}\n\nProblems:\n{problems}", q.sql);
        let request = CompletionRequest::new(Purpose::RepairSql, system, vec![Message::user(user)]);
        let reply = provider
            .complete(&request)
            .map_err(|e| GuardError::RepairFailed {
                cause: e.to_string(),
                report: None,
            })?;
        let candidate =
            QueryCandidate::new(extract_sql(&reply), Origin::Repaired).map_err(|_| {
                GuardError::RepairFailed {
                    cause: "model returned an empty query".into(),
                    report: None,
                }
            })?;
        let report = self.check(&candidate);
        if report.is_rejected() {
            let cause = report
                .errors()
                .map(|d| d.message.clone())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(GuardError::RepairFailed {
                cause,
                report: Some(report),
            });
        }
        Ok(candidate)
    }

    /// Full guard pipeline used before execution.
    pub fn validate(
        &self,
        q: &QueryCandidate,
        provider: Option<&dyn CompletionProvider>,
        options: GuardOptions,
    ) -> GuardOutcome {
        let mut seen: Vec<Diagnostic> = Vec::new();
        let mut applied: Vec<String> = Vec::new();
        let record = |seen: &mut Vec<Diagnostic>, ds: &[Diagnostic]| {
            for d in ds {
                if !seen.contains(d) {
                    seen.push(d.clone());
                }
            }
        };

        let ro = enforce_read_only(q);
        let (mut current, mut report) = if ro.is_rejected() {
            (q.clone(), ro)
        } else {
            let (fixed, rules) = apply_repair_rules(q);
            applied.extend(rules.applied_rules);
            let report = self.syntax_check(&fixed);
            (fixed, report)
        };

        let mut rounds = 0;
        while report.is_rejected() && report.is_repairable() && rounds < options.repair_rounds {
            let Some(provider) = provider else { break };
            rounds += 1;
            record(&mut seen, &report.diagnostics);
            match self.llm_repair(&current, &report.diagnostics, provider) {
                Ok(fixed) => {
                    applied.push("LLM_REPAIR".into());
                    report = self.syntax_check(&fixed);
                    current = fixed;
                }
                Err(e) => {
                    let diag = Diagnostic::error(
                        DiagnosticCode::SqlError,
                        e.to_string(),
                        whole(&current.sql),
                    );
                    report = ValidationReport::from_diagnostics(vec![diag]);
                    break;
                }
            }
        }
        record(&mut seen, &report.diagnostics);

        let verdict = if report.is_rejected() {
            Verdict::Rejected
        } else if applied.is_empty() {
            Verdict::Accepted
        } else {
            Verdict::Repaired
        };
        if verdict != Verdict::Rejected {
            if let Some(n) = options.limit {
                current = inject_limit(&current, n);
            }
        }
        GuardOutcome {
            candidate: current,
            report: ValidationReport {
                verdict,
                applied_rules: applied,
                diagnostics: seen,
            },
        }
    }
}
