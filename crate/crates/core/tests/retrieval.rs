mod common;

use common::*;
use gtfs_chat_core::catalog::{describe_database, Annotations};
use gtfs_chat_core::db::{open_read_only, query_rows};
use gtfs_chat_core::exemplars::{parse_exemplars, ExampleStore, ExemplarPair, DEFAULT_EXEMPLARS};
use gtfs_chat_core::guard::SqlGuard;
use gtfs_chat_core::provider::{cosine, EmbeddingProvider, ScriptedProvider, SCRIPTED_DIMENSION};

const QUESTIONS: [&str; 6] = [
    "How many routes does the agency of Milano run?",
    "Which routes serve the municipality of Bologna on Sundays?",
    "Which municipalities are served by route 27?",
    "What is the average number of trips of route 11 using stop Porta Saragozza?",
    "Draw the map of line 18",
    "zzz",
];

fn shipped() -> (tempfile::TempDir, std::path::PathBuf, Vec<ExemplarPair>) {
    let (dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let (catalog, _) = describe_database(&conn, &Annotations::builtin()).unwrap();
    let pairs = parse_exemplars(DEFAULT_EXEMPLARS, &SqlGuard::new(catalog).unwrap()).unwrap();
    (dir, db, pairs)
}

fn brute_force(
    pairs: &[ExemplarPair],
    question: &str,
    embedder: &dyn EmbeddingProvider,
) -> Vec<(String, f64)> {
    let q = embedder.embed(question).unwrap();
    let mut all: Vec<(String, f64)> = pairs
        .iter()
        .map(|p| {
            (
                p.id.clone(),
                cosine(&q, &embedder.embed(&p.question).unwrap()),
            )
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all
}

#[test]
fn top_k_is_a_prefix_of_the_full_ranking() {
    let (_dir, _db, pairs) = shipped();
    let embedder = ScriptedProvider::new(Vec::new(), 42, SCRIPTED_DIMENSION);
    let store = ExampleStore::new(pairs.clone());
    for question in QUESTIONS {
        let full = brute_force(&pairs, question, &embedder);
        for k in 0..=pairs.len() + 1 {
            let got: Vec<(String, f64)> = store
                .top_k(question, k, &embedder)
                .unwrap()
                .into_iter()
                .map(|s| (s.exemplar.id, s.similarity))
                .collect();
            assert_eq!(got.len(), k.min(pairs.len()));
            for ((id, sim), (want_id, want_sim)) in got.iter().zip(&full) {
                assert_eq!(id, want_id, "{question} k={k}");
                assert!((sim - want_sim).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn retrieval_is_repeatable() {
    let (_dir, _db, pairs) = shipped();
    let ids = |seed| {
        let embedder = ScriptedProvider::new(Vec::new(), seed, SCRIPTED_DIMENSION);
        let store = ExampleStore::new(pairs.clone());
        QUESTIONS
            .iter()
            .map(|q| {
                store
                    .top_k(q, 3, &embedder)
                    .unwrap()
                    .into_iter()
                    .map(|s| s.exemplar.id)
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(ids(42), ids(42));
}

#[test]
fn shipped_exemplars_execute() {
    let (_dir, db, pairs) = shipped();
    let conn = open_read_only(&db).unwrap();
    assert!(pairs.len() >= 3);
    for p in &pairs {
        query_rows(&conn, &p.sql, std::time::Duration::from_secs(10))
            .unwrap_or_else(|e| panic!("{}: {e}", p.id));
    }
}

#[test]
fn scripted_embeddings_are_unit_norm() {
    let embedder = ScriptedProvider::new(Vec::new(), 7, SCRIPTED_DIMENSION);
    for q in QUESTIONS {
        assert!(
            (embedder.embed(q).unwrap().norm() - 1.0).abs() < 1e-9,
            "{q}"
        );
    }
}
