use std::path::{Path, PathBuf};

use crate::ingest::{ingest, FeedSource};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// Both fixture feeds ingested into a fresh database.
pub fn fixture_db() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("transit.sqlite");
    let f = fixtures();
    ingest(
        &[
            FeedSource::new(f.join("feeds/tper"), "tper"),
            FeedSource::new(f.join("feeds/atm"), "atm"),
        ],
        &f.join("municipalities.geojson"),
        &db,
    )
    .unwrap();
    (dir, db)
}
