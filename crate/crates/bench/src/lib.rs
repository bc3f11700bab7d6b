//! Shared setup for the benchmarks.

use std::path::{Path, PathBuf};

use gtfs_chat_core::catalog::{describe_database, Annotations};
use gtfs_chat_core::db::open_read_only;
use gtfs_chat_core::guard::SqlGuard;
use gtfs_chat_core::ingest::{ingest, FeedSource};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn fixture_feeds() -> Vec<FeedSource> {
    let f = fixtures().join("feeds");
    vec![
        FeedSource::new(f.join("tper"), "tper"),
        FeedSource::new(f.join("atm"), "atm"),
    ]
}

/// The fixture feeds ingested into a temporary database.
pub fn fixture_db() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().expect("temp dir");
    let db = dir.path().join("transit.sqlite");
    ingest(
        &fixture_feeds(),
        &fixtures().join("municipalities.geojson"),
        &db,
    )
    .expect("fixture ingest");
    (dir, db)
}

pub fn fixture_guard(db: &Path) -> SqlGuard {
    let conn = open_read_only(db).expect("open fixture db");
    let (catalog, _) = describe_database(&conn, &Annotations::builtin()).expect("catalog");
    SqlGuard::new(catalog).expect("guard")
}
