#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use gtfs_chat_core::agent::{classify_map_request, classify_map_request_with};
use gtfs_chat_core::db::open_read_only;
use gtfs_chat_core::ingest::{
    assign_stop_municipality, ingest, load_municipalities, Direction, FeedSource, IngestSummary,
    StopRecord,
};
use gtfs_chat_core::map::{
    fetch_route_geometry, round6, to_geo_document, GeoFeatureDocument, RouteRef,
};
use gtfs_chat_core::provider::ScriptedProvider;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;
use serde::Deserialize;
use serde_json::Value;

/// Rings of one municipality: polygons, each an outer ring then holes.
pub type Rings = Vec<Vec<Vec<(f64, f64)>>>;

pub const FEEDS: [&str; 2] = ["tper", "atm"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn feed_sources() -> Vec<FeedSource> {
    FEEDS
        .iter()
        .map(|tag| FeedSource::new(fixtures().join("feeds").join(tag), *tag))
        .collect()
}

pub fn municipalities_path() -> PathBuf {
    fixtures().join("municipalities.geojson")
}

pub fn fixture_db() -> (tempfile::TempDir, PathBuf, IngestSummary) {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("transit.sqlite");
    let summary = ingest(&feed_sources(), &municipalities_path(), &db).unwrap();
    (dir, db, summary)
}

/// Rows of a fixture CSV file as header → value maps.
pub fn read_csv(feed: &str, file: &str) -> Vec<BTreeMap<String, String>> {
    let path = fixtures().join("feeds").join(feed).join(file);
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            headers
                .iter()
                .zip(r.unwrap().iter())
                .map(|(h, v)| (h.to_owned(), v.to_owned()))
                .collect()
        })
        .collect()
}

/// Municipality polygons in file order: (code, polygons as rings of (lon, lat)).
pub fn polygons() -> Vec<(String, Rings)> {
    let doc: Value =
        serde_json::from_str(&std::fs::read_to_string(municipalities_path()).unwrap()).unwrap();
    let ring = |r: &Value| -> Vec<(f64, f64)> {
        r.as_array()
            .unwrap()
            .iter()
            .map(|p| (p[0].as_f64().unwrap(), p[1].as_f64().unwrap()))
            .collect()
    };
    let polygon =
        |p: &Value| -> Vec<Vec<(f64, f64)>> { p.as_array().unwrap().iter().map(ring).collect() };
    doc["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| {
            let code = f["properties"]["code"].as_str().unwrap().to_owned();
            let coords = &f["geometry"]["coordinates"];
            let polys = match f["geometry"]["type"].as_str().unwrap() {
                "Polygon" => vec![polygon(coords)],
                "MultiPolygon" => coords.as_array().unwrap().iter().map(polygon).collect(),
                other => panic!("unexpected geometry {other}"),
            };
            (code, polys)
        })
        .collect()
}

fn crossings(ring: &[(f64, f64)], x: f64, y: f64) -> usize {
    let mut n = 0;
    for w in ring.windows(2) {
        let ((x1, y1), (x2, y2)) = (w[0], w[1]);
        if (y1 > y) != (y2 > y) && x < x1 + (y - y1) * (x2 - x1) / (y2 - y1) {
            n += 1;
        }
    }
    n
}

/// Brute-force even-odd test over every ring of every polygon, first match
/// in file order.
pub fn pip_oracle(polys: &[(String, Rings)], lon: f64, lat: f64) -> Option<String> {
    polys
        .iter()
        .find(|(_, parts)| {
            parts
                .iter()
                .any(|rings| rings.iter().map(|r| crossings(r, lon, lat)).sum::<usize>() % 2 == 1)
        })
        .map(|(code, _)| code.clone())
}

pub fn source_shapes(feed: &str) -> BTreeMap<String, Vec<(f64, f64)>> {
    let mut by_shape: BTreeMap<String, Vec<(u32, f64, f64)>> = BTreeMap::new();
    for row in read_csv(feed, "shapes.txt") {
        by_shape.entry(row["shape_id"].clone()).or_default().push((
            row["shape_pt_sequence"].parse().unwrap(),
            row["shape_pt_lat"].parse().unwrap(),
            row["shape_pt_lon"].parse().unwrap(),
        ));
    }
    by_shape
        .into_iter()
        .map(|(id, mut pts)| {
            pts.sort_by_key(|p| p.0);
            (
                id,
                pts.into_iter().map(|(_, lat, lon)| (lat, lon)).collect(),
            )
        })
        .collect()
}

pub fn stored_shape(conn: &Connection, agency: &str, shape: &str) -> Vec<(f64, f64)> {
    let mut stmt = conn
        .prepare(
            "SELECT sp.lat, sp.lon FROM shape_sequences ss
             JOIN shape_points sp ON sp.agency_id = ss.agency_id AND sp.point_id = ss.point_id
             WHERE ss.agency_id = ?1 AND ss.shape_id = ?2 ORDER BY ss.seq",
        )
        .unwrap();
    stmt.query_map([agency, shape], |r| Ok((r.get(0)?, r.get(1)?)))
        .unwrap()
        .map(Result::unwrap)
        .collect()
}

/// (child table, child columns, parent table, parent columns)
const REFERENCES: [(&str, &[&str], &str, &[&str]); 13] = [
    ("routes", &["agency_id"], "agency", &["agency_id"]),
    ("calendar", &["agency_id"], "agency", &["agency_id"]),
    ("shapes", &["agency_id"], "agency", &["agency_id"]),
    ("shape_points", &["agency_id"], "agency", &["agency_id"]),
    (
        "shape_sequences",
        &["agency_id", "shape_id"],
        "shapes",
        &["agency_id", "shape_id"],
    ),
    (
        "shape_sequences",
        &["agency_id", "point_id"],
        "shape_points",
        &["agency_id", "point_id"],
    ),
    (
        "trips",
        &["agency_id", "route_id"],
        "routes",
        &["agency_id", "route_id"],
    ),
    (
        "trips",
        &["agency_id", "service_id"],
        "calendar",
        &["agency_id", "service_id"],
    ),
    (
        "trips",
        &["agency_id", "shape_id"],
        "shapes",
        &["agency_id", "shape_id"],
    ),
    ("stops", &["agency_id"], "agency", &["agency_id"]),
    ("stops", &["municipality_code"], "municipalities", &["code"]),
    (
        "stop_times",
        &["agency_id", "trip_id"],
        "trips",
        &["agency_id", "trip_id"],
    ),
    (
        "stop_times",
        &["agency_id", "stop_id"],
        "stops",
        &["agency_id", "stop_id"],
    ),
];

pub type Key = Vec<Option<String>>;

pub fn keys(conn: &Connection, table: &str, cols: &[&str]) -> Vec<Key> {
    let cast: Vec<String> = cols.iter().map(|c| format!("CAST({c} AS TEXT)")).collect();
    let sql = format!("SELECT {} FROM {table}", cast.join(", "));
    let mut stmt = conn.prepare(&sql).unwrap();
    stmt.query_map([], |r| {
        (0..cols.len())
            .map(|i| r.get::<_, Option<String>>(i))
            .collect()
    })
    .unwrap()
    .map(Result::unwrap)
    .collect()
}

pub fn referential_violations(conn: &Connection) -> usize {
    REFERENCES
        .iter()
        .map(|(child, ccols, parent, pcols)| {
            let parents: Vec<Key> = keys(conn, parent, pcols);
            keys(conn, child, ccols)
                .into_iter()
                // a null anywhere in the reference means "no reference"
                .filter(|k| k.iter().all(Option::is_some))
                .filter(|k| !parents.contains(k))
                .count()
        })
        .sum()
}

/// Source (feed, local id) pairs against stored composite keys, per table.
pub fn key_collisions(conn: &Connection) -> usize {
    let tables = [
        ("routes", "routes.txt", "route_id"),
        ("trips", "trips.txt", "trip_id"),
        ("stops", "stops.txt", "stop_id"),
        ("calendar", "calendar.txt", "service_id"),
    ];
    let mut collisions = 0;
    for (table, file, col) in tables {
        let mut source: HashSet<(String, String)> = HashSet::new();
        for feed in FEEDS {
            for row in read_csv(feed, file) {
                source.insert((feed.to_owned(), row[col].clone()));
            }
        }
        let stored = keys(conn, table, &["agency_id", col]);
        let distinct: HashSet<&Key> = stored.iter().collect();
        // two source pairs landing on one key shrink the stored set
        collisions += source.len() - distinct.len().min(source.len());
        collisions += stored.len() - distinct.len();
        for (feed, id) in &source {
            if !distinct.contains(&vec![Some(feed.clone()), Some(id.clone())]) {
                collisions += 1;
            }
        }
    }
    collisions
}

/// 100 stops drawn inside the bounding boxes of random municipalities.
pub fn random_stops(seed: u64) -> Vec<StopRecord> {
    let polys = polygons();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..100)
        .map(|i| {
            let (_, parts) = &polys[rng.random_range(0..polys.len())];
            let pts: Vec<(f64, f64)> = parts.iter().flatten().flatten().copied().collect();
            let (lo_x, hi_x) = pts
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let (lo_y, hi_y) = pts
                .iter()
                .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
            // pad so some stops fall outside every polygon
            let pad = 0.01;
            StopRecord {
                agency_id: "rnd".into(),
                stop_id: format!("R{i}"),
                name: format!("Random {i}"),
                lon: rng.random_range(lo_x - pad..hi_x + pad),
                lat: rng.random_range(lo_y - pad..hi_y + pad),
                municipality_code: None,
            }
        })
        .collect()
}

pub fn pip_agreement(seed: u64) -> (usize, usize) {
    let municipalities = load_municipalities(&municipalities_path()).unwrap();
    let polys = polygons();
    let mut stops = random_stops(seed);
    assign_stop_municipality(&mut stops, &municipalities);
    let agree = stops
        .iter()
        .filter(|s| s.municipality_code == pip_oracle(&polys, s.lon, s.lat))
        .count();
    (agree, stops.len())
}

pub fn taxonomy() -> Vec<String> {
    std::fs::read_to_string(fixtures().join("mutating.sql"))
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("--"))
        .map(str::to_owned)
        .collect()
}

/// (agency, route, direction) → (shape id, shape point count) over the source files.
pub fn expected_shapes() -> BTreeMap<(String, String, Direction), String> {
    let mut out = BTreeMap::new();
    for feed in FEEDS {
        let shapes = source_shapes(feed);
        let mut best: BTreeMap<(String, Direction), (usize, String)> = BTreeMap::new();
        for trip in read_csv(feed, "trips.txt") {
            let dir = if trip["direction_id"] == "1" {
                Direction::Inbound
            } else {
                Direction::Outbound
            };
            let shape = trip["shape_id"].clone();
            let n = shapes[&shape].len();
            let entry = best
                .entry((trip["route_id"].clone(), dir))
                .or_insert((0, String::new()));
            // most points, then smallest id
            if n > entry.0 || (n == entry.0 && shape < entry.1) {
                *entry = (n, shape);
            }
        }
        for ((route, dir), (_, shape)) in best {
            out.insert((feed.to_owned(), route, dir), shape);
        }
    }
    out
}

pub fn map_round_trips() -> (usize, usize) {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let expected = expected_shapes();
    let mut ok = 0;
    for ((feed, route, dir), shape) in &expected {
        let geometry = fetch_route_geometry(
            &conn,
            &RouteRef {
                agency_id: feed.clone(),
                route_id: route.clone(),
            },
            Some(*dir),
        )
        .unwrap();
        let doc = to_geo_document(&geometry).unwrap();
        let parsed = GeoFeatureDocument::parse(&doc.to_json()).unwrap();
        let (points, stops) = parsed.extract();
        let source: Vec<(f64, f64)> = source_shapes(feed)[shape]
            .iter()
            .map(|&(la, lo)| (round6(la), round6(lo)))
            .collect();
        let good = geometry.shape_id == *shape
            && parsed == doc
            && points == geometry.shape_points
            && stops == geometry.stops
            && points == source;
        ok += usize::from(good);
    }
    (ok, expected.len())
}

#[derive(Deserialize)]
pub struct Labeled {
    pub question: Vec<LabeledQuestion>,
}

#[derive(Deserialize)]
pub struct LabeledQuestion {
    pub text: String,
    pub map: bool,
}

pub fn classifier_agreement() -> (usize, usize) {
    let text = std::fs::read_to_string(fixtures().join("map_questions.toml")).unwrap();
    let labeled: Labeled = toml::from_str(&text).unwrap();
    // a scripted provider without rules: every reply fails and keywords decide
    let provider = ScriptedProvider::new(Vec::new(), 1, 8);
    let agree = labeled
        .question
        .iter()
        .filter(|q| {
            classify_map_request(&q.text) == q.map
                && classify_map_request_with(&q.text, &provider) == q.map
        })
        .count();
    (agree, labeled.question.len())
}
