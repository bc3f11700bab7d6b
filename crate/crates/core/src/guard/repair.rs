use serde::Serialize;
use sqlparser::ast::{GroupByExpr, SelectItem, SetExpr, Statement};

use super::lexer::{significant_end, tokenize, Token, TokenKind};
use super::resolve::contains_aggregate;
use super::{parse, Origin, QueryCandidate, ValidationReport, Verdict};
use crate::ingest::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RepairRule {
    pub id: &'static str,
    pub detector: &'static str,
    pub rewrite: &'static str,
}

pub const DIRECTION_LITERAL: RepairRule = RepairRule {
    id: "DIRECTION_LITERAL",
    detector: "a `direction` column compared with the integer 0 or 1",
    rewrite: "replace 0 with 'andata' and 1 with 'ritorno'",
};

/// Deterministic rules in the order they are applied.
pub const REPAIR_RULES: &[RepairRule] = &[DIRECTION_LITERAL];

fn direction_literal(code: &str) -> Option<&'static str> {
    match code {
        "0" => Some(Direction::Outbound.as_str()),
        "1" => Some(Direction::Inbound.as_str()),
        _ => None,
    }
}

/// Byte ranges of 0/1 literals compared with a `direction` column.
fn direction_edits(sql: &str) -> Vec<(usize, usize, &'static str)> {
    let toks: Vec<Token> = tokenize(sql)
        .into_iter()
        .filter(|t| !t.is_trivia())
        .collect();
    let is_direction =
        |t: &Token| t.kind == TokenKind::Word && t.word(sql).eq_ignore_ascii_case("direction");
    let is_cmp =
        |t: &Token| t.kind == TokenKind::Punct && matches!(t.text(sql), "=" | "==" | "<>" | "!=");
    let is_word =
        |t: &Token, w: &str| t.kind == TokenKind::Word && t.text(sql).eq_ignore_ascii_case(w);
    let is_punct = |t: &Token, p: &str| t.kind == TokenKind::Punct && t.text(sql) == p;
    let literal = |t: &Token| {
        (t.kind == TokenKind::Number)
            .then(|| direction_literal(t.text(sql)))
            .flatten()
    };
    let preceded_by_dot = |i: usize| i > 0 && is_punct(&toks[i - 1], ".");
    // `direction` or `qualifier.direction` starting at token i
    let right_is_direction = |i: usize| {
        let qualified = toks.get(i + 1).is_some_and(|t| is_punct(t, "."));
        if qualified {
            toks.get(i + 2).is_some_and(is_direction)
        } else {
            toks.get(i).is_some_and(is_direction)
        }
    };

    let mut edits = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        if is_cmp(tok) && i > 0 && i + 1 < toks.len() {
            let (left, right) = (&toks[i - 1], &toks[i + 1]);
            if is_direction(left) {
                if let Some(lit) = literal(right) {
                    edits.push((right.start, right.end, lit));
                }
            } else if !preceded_by_dot(i - 1) && right_is_direction(i + 1) {
                if let Some(lit) = literal(left) {
                    edits.push((left.start, left.end, lit));
                }
            }
        }
        if is_direction(tok) {
            let mut j = i + 1;
            if toks.get(j).is_some_and(|t| is_word(t, "not")) {
                j += 1;
            }
            if !(toks.get(j).is_some_and(|t| is_word(t, "in"))
                && toks.get(j + 1).is_some_and(|t| is_punct(t, "(")))
            {
                continue;
            }
            let mut items = Vec::new();
            let mut k = j + 2;
            let complete = loop {
                match toks.get(k) {
                    Some(t) if literal(t).is_some() => {
                        items.push((t.start, t.end, literal(t).unwrap()))
                    }
                    _ => break false,
                }
                match toks.get(k + 1) {
                    Some(t) if is_punct(t, ",") => k += 2,
                    Some(t) if is_punct(t, ")") => break true,
                    _ => break false,
                }
            };
            if complete {
                edits.extend(items);
            }
        }
    }
    edits.sort_unstable();
    edits.dedup();
    edits
}

/// Applies the deterministic rules in order. Queries that do not parse are
/// returned unchanged.
pub fn apply_repair_rules(q: &QueryCandidate) -> (QueryCandidate, ValidationReport) {
    if parse(&q.sql).is_err() {
        return (q.clone(), ValidationReport::accepted());
    }
    let mut sql = q.sql.clone();
    let mut applied = Vec::new();
    for rule in REPAIR_RULES {
        let edits = match rule.id {
            "DIRECTION_LITERAL" => direction_edits(&sql),
            _ => Vec::new(),
        };
        if edits.is_empty() {
            continue;
        }
        let mut out = String::with_capacity(sql.len() + 16 * edits.len());
        let mut pos = 0;
        for (start, end, lit) in edits {
            out.push_str(&sql[pos..start]);
            out.push('\'');
            out.push_str(lit);
            out.push('\'');
            pos = end;
        }
        out.push_str(&sql[pos..]);
        sql = out;
        applied.push(rule.id.to_owned());
    }
    if applied.is_empty() {
        return (q.clone(), ValidationReport::accepted());
    }
    let report = ValidationReport {
        verdict: Verdict::Repaired,
        applied_rules: applied,
        diagnostics: Vec::new(),
    };
    (
        QueryCandidate {
            sql,
            origin: Origin::Repaired,
        },
        report,
    )
}

fn is_single_row_aggregate(body: &SetExpr) -> bool {
    match body {
        SetExpr::Select(s) => {
            let grouped = match &s.group_by {
                GroupByExpr::Expressions(e, _) => !e.is_empty(),
                GroupByExpr::All(_) => true,
            };
            !grouped
                && !s.projection.is_empty()
                && s.projection.iter().all(|item| match item {
                    SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => {
                        contains_aggregate(e)
                    }
                    _ => false,
                })
        }
        SetExpr::Query(q) => q.limit_clause.is_none() && is_single_row_aggregate(&q.body),
        _ => false,
    }
}

/// Appends `limit n` unless the query already limits its rows or returns a
/// single aggregate row. Unparseable text is returned unchanged.
pub fn inject_limit(q: &QueryCandidate, n: usize) -> QueryCandidate {
    let Ok(statements) = parse(&q.sql) else {
        return q.clone();
    };
    let [Statement::Query(query)] = statements.as_slice() else {
        return q.clone();
    };
    if query.limit_clause.is_some() || query.fetch.is_some() || is_single_row_aggregate(&query.body)
    {
        return q.clone();
    }
    let end = significant_end(&q.sql);
    QueryCandidate {
        sql: format!("{} limit {n}", &q.sql[..end]),
        origin: q.origin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(sql: &str) -> QueryCandidate {
        QueryCandidate::new(sql, Origin::Generated).unwrap()
    }

    fn repaired(sql: &str) -> (String, Vec<String>) {
        let (q, r) = apply_repair_rules(&cand(sql));
        (q.sql, r.applied_rules)
    }

    #[test]
    fn direction_integers_become_strings() {
        let (sql, rules) = repaired("select trip_id from trips where direction = 0");
        assert_eq!(sql, "select trip_id from trips where direction = 'andata'");
        assert_eq!(rules, vec!["DIRECTION_LITERAL"]);
        let (sql, _) =
            repaired("select trip_id from trips t where t.direction=1 and 0 <> t.direction");
        assert_eq!(
            sql,
            "select trip_id from trips t where t.direction='ritorno' and 'andata' <> t.direction"
        );
    }

    #[test]
    fn direction_in_list_is_rewritten() {
        let (sql, _) = repaired("select 1 from trips where direction not in (0, 1)");
        assert_eq!(
            sql,
            "select 1 from trips where direction not in ('andata', 'ritorno')"
        );
        let (sql, rules) = repaired("select 1 from trips where direction in (0, 2)");
        assert_eq!(sql, "select 1 from trips where direction in (0, 2)");
        assert!(rules.is_empty());
    }

    #[test]
    fn unrelated_queries_are_unchanged() {
        let q = cand("select count(*) from trips where route_id = '0' and stop_sequence = 1");
        let (out, report) = apply_repair_rules(&q);
        assert_eq!(out, q);
        assert!(report.applied_rules.is_empty());
        assert_eq!(report.verdict, Verdict::Accepted);
    }

    #[test]
    fn repair_is_idempotent() {
        let (once, _) = repaired("select 1 from trips where direction = 1");
        let (twice, rules) = repaired(&once);
        assert_eq!(once, twice);
        assert!(rules.is_empty());
    }

    #[test]
    fn limit_is_appended_when_missing() {
        assert_eq!(
            inject_limit(&cand("select route_id from routes"), 10).sql,
            "select route_id from routes limit 10"
        );
        assert_eq!(
            inject_limit(&cand("select route_id from routes;  -- all\n"), 10).sql,
            "select route_id from routes limit 10"
        );
    }

    #[test]
    fn existing_limit_and_aggregates_are_untouched() {
        for sql in [
            "select route_id from routes limit 5",
            "select count(*) from trips",
            "select avg(n) as a, max(n) from (select count(*) n from trips group by route_id)",
        ] {
            assert_eq!(inject_limit(&cand(sql), 10).sql, sql);
        }
        let grouped = "select route_id, count(*) from trips group by route_id";
        assert_eq!(
            inject_limit(&cand(grouped), 3).sql,
            format!("{grouped} limit 3")
        );
    }
}
