use std::fmt::Write;
use std::sync::OnceLock;

use regex::Regex;

use crate::db::{Cell, RowSet};
use crate::provider::{CompletionProvider, CompletionRequest, Message, ProviderError, Purpose};

pub const EMPTY_RESULT_TEXT: &str =
    "No results found: the query returned no rows for this question.";

pub const SYNTHESIS_INSTRUCTIONS: &str = "You answer questions about public transport services. \
You receive the user's question, the SQL query that was run and the rows it returned. \
Write a short answer in natural language using only values that appear in the rows. \
Never invent numbers or names. If the rows were truncated, say that only part of the result is shown.";

/// How an answer text was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Synthesis {
    Model,
    /// Deterministic rendering; the provider failed or its text quoted
    /// numbers absent from the rows.
    Fallback,
    Empty,
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:[.,]\d+)?").expect("static regex"))
}

/// Numeric literals quoted in `text`.
pub fn quoted_numbers(text: &str) -> Vec<String> {
    number_pattern()
        .find_iter(text)
        .map(|m| m.as_str().to_owned())
        .collect()
}

fn as_number(literal: &str) -> Option<(f64, usize)> {
    let normalized = literal.replace(',', ".");
    let decimals = normalized.split_once('.').map_or(0, |(_, frac)| frac.len());
    normalized.parse().ok().map(|v| (v, decimals))
}

fn rounded(v: f64, decimals: usize) -> f64 {
    let scale = 10f64.powi(decimals.min(12) as i32);
    (v * scale).round() / scale
}

/// True when every number in `answer` is present in the rows, the question
/// or the row count, possibly rounded.
pub fn numbers_grounded(answer: &str, question: &str, rows: &RowSet) -> bool {
    let numbers_in = |text: &str| {
        quoted_numbers(text)
            .iter()
            .filter_map(|n| as_number(n))
            .map(|(v, _)| v)
            .collect::<Vec<_>>()
    };
    let mut allowed: Vec<f64> = vec![rows.len() as f64];
    allowed.extend(numbers_in(question));
    for row in &rows.data {
        for cell in row {
            match cell {
                Cell::Integer(v) => allowed.push(*v as f64),
                Cell::Real(v) => allowed.push(*v),
                Cell::Text(t) => allowed.extend(numbers_in(t)),
                Cell::Null => {}
            }
        }
    }
    quoted_numbers(answer)
        .iter()
        .filter_map(|n| as_number(n))
        .all(|(value, decimals)| {
            allowed
                .iter()
                .any(|&a| (rounded(a, decimals) - value).abs() < 1e-9 || (a - value).abs() < 1e-9)
        })
}

/// Plain rendering of at most `max_rows` rows. Numbers in the text come only
/// from the rows themselves.
pub fn fallback_text(rows: &RowSet, max_rows: usize) -> String {
    if rows.is_empty() {
        return EMPTY_RESULT_TEXT.to_owned();
    }
    if let Some(cell) = rows.scalar() {
        return match cell {
            Cell::Null => "The query returned an empty value.".to_owned(),
            other => format!("The answer is {other}."),
        };
    }
    let shown = &rows.data[..rows.len().min(max_rows)];
    let mut out = String::new();
    if rows.columns.len() == 1 {
        let values: Vec<String> = shown.iter().map(|r| r[0].to_string()).collect();
        let _ = write!(out, "The query returned: {}", values.join(", "));
        out.push_str(if shown.len() < rows.len() {
            ", and further rows not shown."
        } else {
            "."
        });
        return out;
    }
    out.push_str("The query returned these rows:\n");
    let _ = writeln!(out, "{}", rows.columns.join(" | "));
    for row in shown {
        let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
        let _ = writeln!(out, "{}", cells.join(" | "));
    }
    if shown.len() < rows.len() {
        out.push_str("Further rows are not shown.\n");
    }
    out.trim_end().to_owned()
}

/// The synthesis request body: question, query and the first `max_rows` rows.
pub fn synthesis_message(question: &str, sql: &str, rows: &RowSet, max_rows: usize) -> String {
    let mut out = format!("Question: {question}\nSQL: {sql}\n");
    let shown = rows.len().min(max_rows);
    if shown < rows.len() {
        let _ = writeln!(
            out,
            "Rows: {} in total, the first {shown} are shown",
            rows.len()
        );
    } else {
        let _ = writeln!(out, "Rows: {}", rows.len());
    }
    let _ = writeln!(out, "{}", rows.columns.join(" | "));
    for row in &rows.data[..shown] {
        let cells: Vec<String> = row.iter().map(Cell::to_string).collect();
        let _ = writeln!(out, "{}", cells.join(" | "));
    }
    out
}

/// Answer text for executed rows. Empty results are reported as such without
/// asking the model; model text that quotes ungrounded numbers is replaced by
/// the fallback rendering.
pub fn synthesize_answer(
    question: &str,
    sql: &str,
    rows: &RowSet,
    provider: &dyn CompletionProvider,
    max_rows: usize,
) -> (String, Synthesis, Option<ProviderError>) {
    if rows.is_empty() {
        return (EMPTY_RESULT_TEXT.to_owned(), Synthesis::Empty, None);
    }
    let request = CompletionRequest::new(
        Purpose::Synthesize,
        SYNTHESIS_INSTRUCTIONS,
        vec![Message::user(synthesis_message(
            question, sql, rows, max_rows,
        ))],
    );
    match provider.complete(&request) {
        Ok(text) if !text.trim().is_empty() && numbers_grounded(&text, question, rows) => {
            (text.trim().to_owned(), Synthesis::Model, None)
        }
        Ok(_) => (fallback_text(rows, max_rows), Synthesis::Fallback, None),
        Err(e) => (fallback_text(rows, max_rows), Synthesis::Fallback, Some(e)),
    }
}
