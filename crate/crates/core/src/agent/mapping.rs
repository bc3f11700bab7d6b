use std::sync::OnceLock;

use regex::Regex;
use rusqlite::{params, Connection};

use crate::db::{Cell, RowSet};
use crate::ingest::Direction;
use crate::map::RouteRef;
use crate::provider::{CompletionProvider, CompletionRequest, Message, Purpose};

pub const CLASSIFY_INSTRUCTIONS: &str =
    "Decide whether the user asks to draw, show or trace a route on a map. \
Reply with yes or no only.";

fn map_keywords() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(maps?|mappa|mappe|draw|drawn|plot|plotted|trace|disegna|disegnami|traccia|tracciato)\b")
            .expect("static regex")
    })
}

/// Keyword classifier for map requests.
pub fn classify_map_request(question: &str) -> bool {
    map_keywords().is_match(question)
}

/// Asks `provider`; a reply that is neither yes nor no, or a provider
/// failure, falls back to the keyword classifier.
pub fn classify_map_request_with(question: &str, provider: &dyn CompletionProvider) -> bool {
    let request = CompletionRequest::new(
        Purpose::ClassifyMap,
        CLASSIFY_INSTRUCTIONS,
        vec![Message::user(question.to_owned())],
    );
    match provider.complete(&request) {
        Ok(reply) => match reply
            .trim()
            .trim_end_matches('.')
            .to_ascii_lowercase()
            .as_str()
        {
            "yes" | "true" | "si" | "sì" => true,
            "no" | "false" => false,
            _ => classify_map_request(question),
        },
        Err(_) => classify_map_request(question),
    }
}

/// Direction named in the question, if any.
pub fn requested_direction(question: &str) -> Option<Direction> {
    static INBOUND: OnceLock<Regex> = OnceLock::new();
    static OUTBOUND: OnceLock<Regex> = OnceLock::new();
    let inbound = INBOUND
        .get_or_init(|| Regex::new(r"(?i)\b(ritorno|inbound|return)\b").expect("static regex"));
    let outbound =
        OUTBOUND.get_or_init(|| Regex::new(r"(?i)\b(andata|outbound)\b").expect("static regex"));
    if inbound.is_match(question) {
        Some(Direction::Inbound)
    } else if outbound.is_match(question) {
        Some(Direction::Outbound)
    } else {
        None
    }
}

fn text_cell(row: &[Cell], idx: usize) -> Option<String> {
    match row.get(idx)? {
        Cell::Null => None,
        other => Some(other.to_string()),
    }
}

fn routes_by_short_name(conn: &Connection, short_name: &str) -> rusqlite::Result<Vec<RouteRef>> {
    let mut stmt = conn.prepare(
        "SELECT agency_id, route_id FROM routes WHERE route_short_name = ?1 ORDER BY agency_id, route_id",
    )?;
    let rows = stmt.query_map(params![short_name], |r| {
        Ok(RouteRef {
            agency_id: r.get(0)?,
            route_id: r.get(1)?,
        })
    })?;
    rows.collect()
}

/// Route to draw: taken from `agency_id`/`route_id` columns of the result,
/// then from a `route_short_name` column, then from a line number in the
/// question. Short names shared by several agencies resolve to the first
/// agency in id order.
pub fn resolve_route(
    conn: &Connection,
    question: &str,
    rows: &RowSet,
) -> rusqlite::Result<Option<RouteRef>> {
    if let (Some(a), Some(r)) = (
        rows.column_index("agency_id"),
        rows.column_index("route_id"),
    ) {
        if let Some(row) = rows.data.first() {
            if let (Some(agency_id), Some(route_id)) = (text_cell(row, a), text_cell(row, r)) {
                return Ok(Some(RouteRef {
                    agency_id,
                    route_id,
                }));
            }
        }
    }
    if let Some(s) = rows.column_index("route_short_name") {
        if let Some(name) = rows.data.first().and_then(|row| text_cell(row, s)) {
            if let Some(found) = routes_by_short_name(conn, &name)?.into_iter().next() {
                return Ok(Some(found));
            }
        }
    }
    static LINE: OnceLock<Regex> = OnceLock::new();
    let line = LINE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:line|route|linea|bus)\s+(?:number\s+)?([A-Za-z0-9]+)")
            .expect("static regex")
    });
    if let Some(name) = line.captures(question).map(|c| c[1].to_owned()) {
        return Ok(routes_by_short_name(conn, &name)?.into_iter().next());
    }
    Ok(None)
}
