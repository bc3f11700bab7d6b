//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the report.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use common::*;
use gtfs_chat_core::agent::{Agent, AgentConfig};
use gtfs_chat_core::catalog::{describe_database, Annotations};
use gtfs_chat_core::db::open_read_only;
use gtfs_chat_core::eval::{
    compare_result_sets, draft_gold, expand_templates, grade, run_suite, summarize, AgentClient,
    Category, ComparisonOutcome, ExpandConfig, GoldResults, GradedOutcome, MetricsSummary,
    RepeatPlan, RunRecord, SuiteOptions, TemplateId, DEFAULT_SCALAR_TOLERANCE,
};
use gtfs_chat_core::guard::{
    apply_repair_rules, GuardOptions, Origin, QueryCandidate, SqlGuard, Verdict,
};
use gtfs_chat_core::provider::{Providers, ScriptedProvider};
use gtfs_chat_core::{Cell, RowSet};

struct Check {
    name: String,
    ok: bool,
    detail: String,
    /// Failure recorded as unattainable in the decisions ledger.
    known_gap: bool,
}

fn check(name: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.to_owned(),
        ok,
        detail: detail.into(),
        known_gap: false,
    }
}

struct Criterion {
    title: &'static str,
    run: fn() -> Vec<Check>,
}

fn ingestion_round_trip() -> Vec<Check> {
    let start = Instant::now();
    let (_dir, db, _) = fixture_db();
    let elapsed = start.elapsed();
    let conn = open_read_only(&db).unwrap();
    let count = |sql: &str| conn.query_row(sql, [], |r| r.get::<_, i64>(0)).unwrap();
    let sizes = (
        count("SELECT count(*) FROM agency"),
        count("SELECT count(*) FROM routes"),
        count("SELECT count(*) FROM shapes"),
        count("SELECT count(*) FROM stop_times"),
    );
    let mut shapes = 0;
    let mut equal = 0;
    for feed in FEEDS {
        for (id, points) in source_shapes(feed) {
            shapes += 1;
            equal += usize::from(stored_shape(&conn, feed, &id) == points);
        }
    }
    let violations = referential_violations(&conn);
    vec![
        check(
            "fixture size",
            sizes.0 >= 2 && sizes.1 >= 5 && sizes.2 >= 3 && sizes.3 >= 50,
            format!(
                "agencies={} routes={} shapes={} stop_times={}",
                sizes.0, sizes.1, sizes.2, sizes.3
            ),
        ),
        check(
            "shape reconstruction",
            equal == shapes,
            format!("{equal}/{shapes} shapes equal"),
        ),
        check(
            "referential scan",
            violations == 0,
            format!("{violations} violations"),
        ),
        check(
            "runtime",
            elapsed < Duration::from_secs(10),
            format!("{:.2}s", elapsed.as_secs_f64()),
        ),
    ]
}

fn key_augmentation() -> Vec<Check> {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let routes_18: i64 = conn
        .query_row(
            "SELECT count(*) FROM routes WHERE route_id = '18'",
            [],
            |r| r.get(0),
        )
        .unwrap();
    let collisions = key_collisions(&conn);
    vec![
        check(
            "route_id 18 in both feeds",
            routes_18 == 2,
            format!("{routes_18} routes"),
        ),
        check(
            "collision scan",
            collisions == 0,
            format!("{collisions} collisions"),
        ),
    ]
}

fn municipality_assignment() -> Vec<Check> {
    let (agree, total) = pip_agreement(2024);
    vec![check(
        "point-in-polygon oracle",
        agree == total && total == 100,
        format!("{agree}/{total} agree"),
    )]
}

fn cand(sql: &str) -> QueryCandidate {
    QueryCandidate::new(sql, Origin::Generated).unwrap()
}

fn guard_criterion() -> Vec<Check> {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let (catalog, _) = describe_database(&conn, &Annotations::builtin()).unwrap();
    let guard = SqlGuard::new(catalog).unwrap();
    let options = GuardOptions {
        repair_rounds: 1,
        limit: None,
    };
    let statements = taxonomy();
    let rejected = statements
        .iter()
        .filter(|s| {
            let out = guard.validate(&cand(s), None, options);
            out.report.verdict == Verdict::Rejected && out.executable().is_none()
        })
        .count();
    let bologna =
        "select count(distinct r.route_id) from routes r join agency a using (agency_id) \
                   where upper(a.agency_hq_city) like upper('%Bologna%')";
    let out = guard.validate(&cand(bologna), None, options);
    let verbatim = out.report.verdict == Verdict::Accepted && out.candidate.sql == bologna;

    let zero = apply_repair_rules(&cand("select trip_id from trips where direction = 0")).0;
    let one = apply_repair_rules(&cand("select trip_id from trips where direction = 1")).0;
    let rewritten =
        zero.sql.ends_with("direction = 'andata'") && one.sql.ends_with("direction = 'ritorno'");
    let idempotent = [&zero, &one]
        .iter()
        .all(|q| apply_repair_rules(q).0.sql == q.sql);
    vec![
        check(
            "mutating taxonomy rejected",
            rejected == statements.len() && statements.len() >= 15,
            format!("{rejected}/{} rejected", statements.len()),
        ),
        check(
            "Bologna query accepted verbatim",
            verbatim,
            format!("{:?}", out.report.verdict),
        ),
        check(
            "DIRECTION_LITERAL rewrite",
            rewritten,
            format!("{} | {}", zero.sql, one.sql),
        ),
        check("repair idempotent", idempotent, ""),
    ]
}

fn list(values: &[&str]) -> RowSet {
    RowSet {
        columns: vec!["route_short_name".into()],
        data: values
            .iter()
            .map(|v| vec![Cell::Text((*v).into())])
            .collect(),
    }
}

fn describe(o: &ComparisonOutcome) -> String {
    format!(
        "{} fp={:?} fn={:?}",
        o.category.as_str(),
        o.fp_rate,
        o.fn_rate
    )
}

fn comparator_arithmetic() -> Vec<Check> {
    let six = compare_result_sets(&list(&["a"]), &list(&["a", "b", "c", "d", "e", "f"]));
    let six_ok = six.category == Category::Superset
        && six.fp_rate.is_some_and(|r| (r - 0.833).abs() <= 0.001);

    // read literally: four gold rows, four generated rows of which one is wrong
    let literal = compare_result_sets(&list(&["a", "b", "c", "d"]), &list(&["a", "b", "c", "x"]));
    let literal_ok = literal.fp_rate == Some(0.75);

    // the superset shape that yields a 75% false positive rate
    let quarter = compare_result_sets(&list(&["a"]), &list(&["a", "b", "c", "d"]));
    let quarter_ok = quarter.category == Category::Superset && quarter.fp_rate == Some(0.75);

    let subset = compare_result_sets(&list(&["a", "b", "c", "d", "e"]), &list(&["a", "b", "c"]));
    let subset_ok = subset.category == Category::Subset
        && subset.fn_rate.is_some_and(|r| (r - 0.40).abs() < 1e-12);

    let permutation = permutation_invariance(1000);
    vec![
        check("gold 1 / generated 6", six_ok, describe(&six)),
        Check {
            known_gap: true,
            ..check(
                "gold 4 / generated 4 with 1 wrong",
                literal_ok,
                format!(
                    "{}; fp_rate = |gen \\ gold| / |gen| = 1/4 for this pair",
                    describe(&literal)
                ),
            )
        },
        check("gold 1 / generated 4", quarter_ok, describe(&quarter)),
        check("subset 3 of 5", subset_ok, describe(&subset)),
        check(
            "permutation invariance",
            permutation.0 == permutation.1,
            format!("{}/{} tables", permutation.0, permutation.1),
        ),
    ]
}

/// Random tables compared before and after shuffling rows and columns.
fn permutation_invariance(cases: usize) -> (usize, usize) {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let names = ["agency_id", "route_id", "name", "n"];
    let cell = |rng: &mut rand_chacha::ChaCha8Rng| match rng.random_range(0..4) {
        0 => Cell::Null,
        1 => Cell::Integer(rng.random_range(0..3)),
        2 => Cell::Real([0.5, 2.0][rng.random_range(0..2)]),
        _ => Cell::Text(["x", "y"][rng.random_range(0..2)].into()),
    };
    let mut same = 0;
    for _ in 0..cases {
        let width = rng.random_range(1..=names.len());
        let columns: Vec<String> = names[..width].iter().map(|s| s.to_string()).collect();
        let table = |rng: &mut rand_chacha::ChaCha8Rng, rows: usize| RowSet {
            columns: columns.clone(),
            data: (0..rows)
                .map(|_| (0..width).map(|_| cell(rng)).collect())
                .collect(),
        };
        let rows = rng.random_range(0..7);
        let gold = table(&mut rng, rows);
        let rows = rng.random_range(0..4);
        let mut generated = table(&mut rng, rows);
        generated
            .data
            .extend(gold.data.iter().filter(|_| rng.random_bool(0.6)).cloned());
        let shuffle = |t: &RowSet, rng: &mut rand_chacha::ChaCha8Rng| {
            let mut cols: Vec<usize> = (0..t.columns.len()).collect();
            cols.shuffle(rng);
            let mut rows = t.data.clone();
            rows.shuffle(rng);
            RowSet {
                columns: cols.iter().map(|&c| t.columns[c].clone()).collect(),
                data: rows
                    .iter()
                    .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
                    .collect(),
            }
        };
        let (g2, x2) = (shuffle(&gold, &mut rng), shuffle(&generated, &mut rng));
        same +=
            usize::from(compare_result_sets(&gold, &generated) == compare_result_sets(&g2, &x2));
    }
    (same, cases)
}

fn outcomes(counts: &[(Category, usize)], template: &str) -> Vec<GradedOutcome> {
    counts
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat(c).take(n))
        .enumerate()
        .map(|(i, c)| GradedOutcome {
            question_id: format!("{template}-{i}"),
            template_id: template.into(),
            attempt: 1,
            outcome: ComparisonOutcome::of(c),
        })
        .collect()
}

fn summary_arithmetic() -> Vec<Check> {
    let lists = summarize(&outcomes(
        &[
            (Category::SyntaxError, 10),
            (Category::WrongShape, 17),
            (Category::ExactMatch, 59),
            (Category::Superset, 2),
            (Category::Subset, 10),
            (Category::Disjoint, 14),
        ],
        "T1",
    ));
    let scalars = summarize(&outcomes(
        &[(Category::ScalarExact, 6), (Category::ScalarDiff, 28)],
        "T3",
    ));
    let a = lists.accuracy["overall"];
    let b = scalars.accuracy["overall"];
    vec![
        check(
            "112 list answers",
            lists.total == 112 && (a - 0.527).abs() <= 0.001,
            format!("accuracy {a:.4} over {}", lists.total),
        ),
        check(
            "34 scalar answers",
            scalars.total == 34 && (b - 0.176).abs() <= 0.001,
            format!("accuracy {b:.4} over {}", scalars.total),
        ),
    ]
}

fn suite_run(db: &std::path::Path) -> (Vec<RunRecord>, MetricsSummary) {
    let script = std::fs::read_to_string(fixtures().join("suite_script.toml")).unwrap();
    let providers = Providers::scripted(ScriptedProvider::parse(&script).unwrap());
    let config = AgentConfig {
        row_limit: 0,
        ..Default::default()
    };
    let agent = Agent::open(db, None, providers, config).unwrap();
    let conn = open_read_only(db).unwrap();
    let expand = ExpandConfig {
        seed: 7,
        counts: [
            (TemplateId::T1, 4),
            (TemplateId::T2, 4),
            (TemplateId::T3, 4),
        ]
        .into_iter()
        .collect(),
        ..Default::default()
    };
    let questions = expand_templates(&conn, &expand, None).unwrap();
    let run = run_suite(
        &questions,
        &AgentClient(&agent),
        &RepeatPlan::Uniform(1),
        SuiteOptions::default(),
    );
    let gold = GoldResults::execute(&draft_gold(&questions), agent.guard(), &conn).unwrap();
    let graded = grade(&run.records, &gold, DEFAULT_SCALAR_TOLERANCE).unwrap();
    (run.records, summarize(&graded))
}

fn end_to_end() -> Vec<Check> {
    let (_dir, db, _) = fixture_db();
    let start = Instant::now();
    let (first, summary_a) = suite_run(&db);
    let (second, summary_b) = suite_run(&db);
    let elapsed = start.elapsed();
    let bytes = |records: &[RunRecord]| {
        records
            .iter()
            .map(|r| serde_json::to_string(&r.without_timestamps()).unwrap())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let answered = first.iter().filter(|r| r.has_result()).count();
    vec![
        check(
            "12 questions asked",
            first.len() == 12,
            format!("{} records, {answered} with rows", first.len()),
        ),
        check(
            "records byte-identical",
            bytes(&first) == bytes(&second),
            "",
        ),
        check(
            "summaries identical",
            summary_a == summary_b,
            format!("overall accuracy {:.3}", summary_a.accuracy["overall"]),
        ),
        check(
            "suite runtime",
            elapsed < Duration::from_secs(60),
            format!("{:.2}s for two runs", elapsed.as_secs_f64()),
        ),
    ]
}

fn template_expansion() -> Vec<Check> {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let cfg = ExpandConfig {
        seed: 1234,
        invalid_probability: 0.5,
        ..Default::default()
    };
    let a = expand_templates(&conn, &cfg, None).unwrap();
    let b = expand_templates(&conn, &cfg, None).unwrap();
    let linked = linked_pairs_oracle();
    let invalid: Vec<_> = a.iter().filter(|q| q.injected_invalid).collect();
    let unlinked = invalid
        .iter()
        .filter(|q| {
            q.template_id == TemplateId::T3
                && !linked.contains(&(q.bindings["route"].clone(), q.bindings["stop"].clone()))
        })
        .count();
    vec![
        check(
            "same seed, same questions",
            a == b && a.len() == 42,
            format!("{} questions", a.len()),
        ),
        check(
            "injected pairs unlinked",
            !invalid.is_empty() && unlinked == invalid.len(),
            format!("{unlinked}/{} verified against stop_times", invalid.len()),
        ),
    ]
}

/// (route short name, stop name) pairs joined by a trip in the source files.
fn linked_pairs_oracle() -> BTreeSet<(String, String)> {
    let mut pairs = BTreeSet::new();
    for feed in FEEDS {
        let routes = read_csv(feed, "routes.txt");
        let trips = read_csv(feed, "trips.txt");
        let stops = read_csv(feed, "stops.txt");
        for st in read_csv(feed, "stop_times.txt") {
            let trip = trips
                .iter()
                .find(|t| t["trip_id"] == st["trip_id"])
                .unwrap();
            let route = routes
                .iter()
                .find(|r| r["route_id"] == trip["route_id"])
                .unwrap();
            let stop = stops
                .iter()
                .find(|s| s["stop_id"] == st["stop_id"])
                .unwrap();
            pairs.insert((route["route_short_name"].clone(), stop["stop_name"].clone()));
        }
    }
    pairs
}

fn map_pipeline() -> Vec<Check> {
    let (ok, total) = map_round_trips();
    vec![check(
        "GeoJSON round trip in sequence order",
        ok == total && total > 0,
        format!("{ok}/{total} route directions"),
    )]
}

const CRITERIA: [Criterion; 9] = [
    Criterion {
        title: "ingestion round-trip",
        run: ingestion_round_trip,
    },
    Criterion {
        title: "key augmentation",
        run: key_augmentation,
    },
    Criterion {
        title: "municipality assignment",
        run: municipality_assignment,
    },
    Criterion {
        title: "SQL guard",
        run: guard_criterion,
    },
    Criterion {
        title: "comparator arithmetic",
        run: comparator_arithmetic,
    },
    Criterion {
        title: "summary arithmetic",
        run: summary_arithmetic,
    },
    Criterion {
        title: "end-to-end determinism",
        run: end_to_end,
    },
    Criterion {
        title: "template expansion",
        run: template_expansion,
    },
    Criterion {
        title: "map pipeline",
        run: map_pipeline,
    },
];

#[test]
fn acceptance() {
    let mut unexpected = Vec::new();
    for (i, criterion) in CRITERIA.iter().enumerate() {
        let checks = (criterion.run)();
        let pass = checks.iter().all(|c| c.ok);
        println!(
            "{} [{}] {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            criterion.title
        );
        for c in &checks {
            let mark = match (c.ok, c.known_gap) {
                (true, _) => "ok",
                (false, true) => "FAIL (known gap)",
                (false, false) => "FAIL",
            };
            println!(
                "    {mark}: {}{}",
                c.name,
                if c.detail.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", c.detail)
                }
            );
            if !c.ok && !c.known_gap {
                unexpected.push(format!("[{}] {}: {}", i + 1, criterion.title, c.name));
            }
        }
    }
    assert!(unexpected.is_empty(), "failing checks: {unexpected:?}");
}
