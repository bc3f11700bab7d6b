mod common;

use common::*;
use gtfs_chat_core::db::open_read_only;

#[test]
fn shapes_reconstruct_exactly() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let mut checked = 0;
    for feed in FEEDS {
        for (shape, points) in source_shapes(feed) {
            assert_eq!(stored_shape(&conn, feed, &shape), points, "{feed}/{shape}");
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn every_reference_resolves() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    assert_eq!(referential_violations(&conn), 0);
    let pragma: usize = conn
        .prepare("PRAGMA foreign_key_check")
        .unwrap()
        .query_map([], |_| Ok(()))
        .unwrap()
        .count();
    assert_eq!(pragma, 0);
}

#[test]
fn fixture_meets_minimum_sizes() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let count = |sql: &str| conn.query_row(sql, [], |r| r.get::<_, i64>(0)).unwrap();
    assert!(count("SELECT count(*) FROM agency") >= 2);
    assert!(count("SELECT count(*) FROM routes") >= 5);
    assert!(count("SELECT count(*) FROM shapes") >= 3);
    assert!(count("SELECT count(*) FROM stop_times") >= 50);
}

#[test]
fn shared_route_ids_stay_distinct() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let agencies: Vec<String> = conn
        .prepare("SELECT agency_id FROM routes WHERE route_id = '18' ORDER BY agency_id")
        .unwrap()
        .query_map([], |r| r.get(0))
        .unwrap()
        .map(Result::unwrap)
        .collect();
    assert_eq!(agencies, ["atm", "tper"]);
}

#[test]
fn augmented_keys_never_collide() {
    let (_dir, db, _) = fixture_db();
    assert_eq!(key_collisions(&open_read_only(&db).unwrap()), 0);
}

#[test]
fn stored_stops_match_point_in_polygon_oracle() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let polys = polygons();
    let mut stmt = conn
        .prepare("SELECT stop_lon, stop_lat, municipality_code FROM stops")
        .unwrap();
    let rows: Vec<(f64, f64, Option<String>)> = stmt
        .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))
        .unwrap()
        .map(Result::unwrap)
        .collect();
    assert!(!rows.is_empty());
    for (lon, lat, code) in rows {
        assert_eq!(code, pip_oracle(&polys, lon, lat), "stop at {lon},{lat}");
    }
}

#[test]
fn random_stops_match_point_in_polygon_oracle() {
    for seed in [1, 2, 3] {
        assert_eq!(pip_agreement(seed), (100, 100));
    }
}

#[test]
fn single_trip_route_view_rows() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    // hand join: shape points of the trip's shape plus the trip's stop times
    let shape_points = read_csv("atm", "shapes.txt")
        .iter()
        .filter(|r| r["shape_id"] == "SM1")
        .count();
    let stops = read_csv("atm", "stop_times.txt")
        .iter()
        .filter(|r| r["trip_id"] == "TM1_1")
        .count();
    let count = |kind: &str| -> usize {
        conn.query_row(
            "SELECT count(*) FROM route_geometry WHERE agency_id = 'atm' AND route_id = 'M1' AND kind = ?1",
            [kind],
            |r| r.get::<_, i64>(0),
        )
        .unwrap() as usize
    };
    assert_eq!((shape_points, stops), (10, 5));
    assert_eq!(count("shape_point"), shape_points);
    assert_eq!(count("stop"), stops);
    assert_eq!(count("shape_point") + count("stop"), 15);
}

#[test]
fn directions_are_canonical() {
    let (_dir, db, _) = fixture_db();
    let conn = open_read_only(&db).unwrap();
    let bad: i64 = conn
        .query_row(
            "SELECT count(*) FROM trips WHERE direction NOT IN ('andata', 'ritorno')",
            [],
            |r| r.get(0),
        )
        .unwrap();
    assert_eq!(bad, 0);
}

#[test]
fn ingest_is_fast() {
    let start = std::time::Instant::now();
    let _ = fixture_db();
    assert!(start.elapsed().as_secs_f64() < 10.0);
}
