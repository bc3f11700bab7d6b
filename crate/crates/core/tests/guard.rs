mod common;

use common::*;
use gtfs_chat_core::catalog::{describe_database, Annotations};
use gtfs_chat_core::db::open_read_only;
use gtfs_chat_core::guard::{
    apply_repair_rules, GuardOptions, Origin, QueryCandidate, SqlGuard, Verdict,
};
use proptest::prelude::*;

fn fixture_guard() -> (tempfile::TempDir, std::path::PathBuf, SqlGuard) {
    let (dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let (catalog, _) = describe_database(&conn, &Annotations::builtin()).unwrap();
    (dir, db, SqlGuard::new(catalog).unwrap())
}

fn cand(sql: &str) -> QueryCandidate {
    QueryCandidate::new(sql, Origin::Generated).unwrap()
}

#[test]
fn every_mutating_statement_is_refused() {
    let (_dir, db, guard) = fixture_guard();
    let statements = taxonomy();
    assert!(statements.len() >= 15);
    let before: i64 = open_read_only(&db)
        .unwrap()
        .query_row("SELECT count(*) FROM routes", [], |r| r.get(0))
        .unwrap();
    for sql in &statements {
        let outcome = guard.validate(
            &cand(sql),
            None,
            GuardOptions {
                repair_rounds: 1,
                limit: Some(50),
            },
        );
        assert_eq!(outcome.report.verdict, Verdict::Rejected, "{sql}");
        assert!(outcome.executable().is_none(), "{sql}");
    }
    let after: i64 = open_read_only(&db)
        .unwrap()
        .query_row("SELECT count(*) FROM routes", [], |r| r.get(0))
        .unwrap();
    assert_eq!(before, after);
}

#[test]
fn bologna_route_count_runs_unchanged() {
    let (_dir, db, guard) = fixture_guard();
    let sql = "select count(distinct r.route_id) from routes r join agency a using (agency_id) \
               where upper(a.agency_hq_city) like upper('%Bologna%')";
    let outcome = guard.validate(
        &cand(sql),
        None,
        GuardOptions {
            repair_rounds: 1,
            limit: None,
        },
    );
    assert_eq!(outcome.report.verdict, Verdict::Accepted);
    assert_eq!(outcome.candidate.sql, sql);
    let n: i64 = open_read_only(&db)
        .unwrap()
        .query_row(sql, [], |r| r.get(0))
        .unwrap();
    assert_eq!(n, read_csv("tper", "routes.txt").len() as i64);
}

#[test]
fn direction_literals_are_rewritten() {
    let (repaired, report) =
        apply_repair_rules(&cand("select trip_id from trips where direction = 0"));
    assert_eq!(
        repaired.sql,
        "select trip_id from trips where direction = 'andata'"
    );
    assert_eq!(report.applied_rules, vec!["DIRECTION_LITERAL"]);
    let (repaired, _) =
        apply_repair_rules(&cand("select trip_id from trips t where t.direction = 1"));
    assert_eq!(
        repaired.sql,
        "select trip_id from trips t where t.direction = 'ritorno'"
    );
}

fn direction_query() -> impl Strategy<Value = String> {
    let column = prop_oneof![Just("direction"), Just("t.direction"), Just("DIRECTION")];
    let op = prop_oneof![Just("="), Just(" = "), Just("<>"), Just("!=")];
    let value = prop_oneof![
        Just("0"),
        Just("1"),
        Just("'andata'"),
        Just("'ritorno'"),
        Just("2")
    ];
    let tail = prop_oneof![
        Just(""),
        Just(" order by 1"),
        Just(" and t.route_id = '18'"),
        Just(" limit 5")
    ];
    (column, op, value, tail, any::<bool>()).prop_map(|(c, o, v, tail, in_list)| {
        let cond = if in_list {
            format!("{c} in (0, 1)")
        } else {
            format!("{c}{o}{v}")
        };
        format!("select t.trip_id from trips t where {cond}{tail}")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn repair_is_idempotent(sql in direction_query()) {
        let (once, _) = apply_repair_rules(&cand(&sql));
        let (twice, report) = apply_repair_rules(&once);
        prop_assert_eq!(&once.sql, &twice.sql);
        prop_assert!(report.applied_rules.is_empty());
    }

    #[test]
    fn repair_keeps_queries_parseable(sql in direction_query()) {
        let (repaired, _) = apply_repair_rules(&cand(&sql));
        let dialect = sqlparser::dialect::SQLiteDialect {};
        prop_assert!(sqlparser::parser::Parser::parse_sql(&dialect, &repaired.sql).is_ok(), "{}", repaired.sql);
    }
}

#[test]
fn decisions_are_pure() {
    let (_dir, _db, guard) = fixture_guard();
    for sql in taxonomy().iter().map(String::as_str).chain([
        "select r.route_id from routes",
        "select 1 from trips where direction = 0",
    ]) {
        let a = guard.validate(&cand(sql), None, GuardOptions::default());
        let b = guard.validate(&cand(sql), None, GuardOptions::default());
        assert_eq!(a.report, b.report);
        assert_eq!(a.candidate, b.candidate);
    }
}
