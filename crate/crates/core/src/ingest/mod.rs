//! GTFS ingestion: parse feeds, augment keys with the feed tag, split shapes
//! into points and sequences, attach municipalities to stops and load
//! everything into one relational database.

mod database;
mod model;
mod municipality;
mod normalize;
mod parse;
mod shapes;

use std::path::{Path, PathBuf};

pub use database::{build_database, SCHEMA_SQL};
pub use model::*;
pub use municipality::{
    assign_stop_municipality, load_municipalities, parse_municipalities, AssignmentReport,
    MunicipalityIndex,
};
pub use normalize::{normalize_keys, DanglingReference};
pub use parse::{
    parse_feed, parse_feed_with, parse_gtfs_date, parse_gtfs_time, ParseOptions,
    DEFAULT_MALFORMED_ROW_CAP, REQUIRED_FILES,
};
pub use shapes::{decompose_shapes, DecomposedShapes};

use crate::db::DatabaseHandle;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("required GTFS file {file}.txt is missing from {}", dir.display())]
    MissingFile { file: String, dir: PathBuf },
    #[error("{file} lacks required column {column}")]
    MissingColumn { file: String, column: String },
    #[error("malformed row at {0}")]
    MalformedRow(RowIssue),
    #[error("{0}.txt contains no records")]
    EmptyFile(String),
    #[error("invalid agency tag {0:?}")]
    InvalidTag(String),
    #[error("{} dangling reference(s), first: {}", .0.len(), .0[0])]
    DanglingReferences(Vec<DanglingReference>),
    #[error("malformed geometry (feature {feature:?}): {reason}")]
    MalformedGeometry {
        feature: Option<usize>,
        reason: String,
    },
    #[error("feed {0} has not been normalized")]
    NotNormalized(String),
    #[error("constraint violation in {table} for {row}: {message}")]
    ConstraintViolation {
        table: &'static str,
        row: String,
        message: String,
    },
    #[error("CSV error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Database(#[from] rusqlite::Error),
}

/// One feed directory to ingest.
#[derive(Debug, Clone)]
pub struct FeedSource {
    pub dir: PathBuf,
    pub tag: String,
    pub options: ParseOptions,
}

impl FeedSource {
    pub fn new(dir: impl Into<PathBuf>, tag: impl Into<String>) -> Self {
        Self {
            dir: dir.into(),
            tag: tag.into(),
            options: ParseOptions::default(),
        }
    }
}

#[derive(Debug)]
pub struct IngestSummary {
    pub database: DatabaseHandle,
    pub row_issues: Vec<RowIssue>,
    pub assignment: AssignmentReport,
    pub counts: Vec<(String, [(&'static str, usize); 7])>,
}

/// Full batch: parse, normalize, enrich and load.
pub fn ingest(
    feeds: &[FeedSource],
    municipalities: &Path,
    db_path: &Path,
) -> Result<IngestSummary, IngestError> {
    let municipalities = load_municipalities(municipalities)?;
    let mut bundles = Vec::with_capacity(feeds.len());
    let mut assignment = AssignmentReport::default();
    for feed in feeds {
        let bundle = parse_feed_with(&feed.dir, &feed.tag, &feed.options)?;
        let mut bundle = normalize_keys(bundle)?;
        let report = assign_stop_municipality(&mut bundle.stops, &municipalities);
        assignment.matched += report.matched;
        assignment.unmatched.extend(report.unmatched);
        bundles.push(bundle);
    }
    let database = build_database(db_path, &bundles, &municipalities)?;
    Ok(IngestSummary {
        database,
        row_issues: bundles
            .iter()
            .flat_map(|b| b.issues.iter().cloned())
            .collect(),
        assignment,
        counts: bundles
            .iter()
            .map(|b| (b.agency_tag.clone(), b.counts()))
            .collect(),
    })
}
