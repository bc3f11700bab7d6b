use std::path::Path;

use rusqlite::{params, Connection, Transaction};

use super::model::{FeedBundle, MunicipalityRecord, Polygon};
use super::shapes::decompose_shapes;
use super::IngestError;
use crate::db::DatabaseHandle;

/// Relational schema of the transit database. Every GTFS-derived table is
/// keyed by `agency_id` plus the feed-local identifier.
pub const SCHEMA_SQL: &str = r#"
CREATE TABLE municipalities (
    code TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    geometry TEXT NOT NULL
);
CREATE TABLE agency (
    agency_id TEXT PRIMARY KEY,
    agency_name TEXT NOT NULL,
    agency_hq_city TEXT NOT NULL,
    source_agency_id TEXT NOT NULL
);
CREATE TABLE routes (
    agency_id TEXT NOT NULL REFERENCES agency(agency_id),
    route_id TEXT NOT NULL,
    route_short_name TEXT NOT NULL,
    route_long_name TEXT NOT NULL,
    PRIMARY KEY (agency_id, route_id)
);
CREATE TABLE calendar (
    agency_id TEXT NOT NULL REFERENCES agency(agency_id),
    service_id TEXT NOT NULL,
    monday INTEGER NOT NULL,
    tuesday INTEGER NOT NULL,
    wednesday INTEGER NOT NULL,
    thursday INTEGER NOT NULL,
    friday INTEGER NOT NULL,
    saturday INTEGER NOT NULL,
    sunday INTEGER NOT NULL,
    start_date TEXT NOT NULL,
    end_date TEXT NOT NULL,
    PRIMARY KEY (agency_id, service_id),
    CHECK (start_date <= end_date)
);
CREATE TABLE shapes (
    agency_id TEXT NOT NULL REFERENCES agency(agency_id),
    shape_id TEXT NOT NULL,
    PRIMARY KEY (agency_id, shape_id)
);
CREATE TABLE shape_points (
    agency_id TEXT NOT NULL REFERENCES agency(agency_id),
    point_id INTEGER NOT NULL,
    lat REAL NOT NULL,
    lon REAL NOT NULL,
    PRIMARY KEY (agency_id, point_id)
);
CREATE TABLE shape_sequences (
    agency_id TEXT NOT NULL,
    shape_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    point_id INTEGER NOT NULL,
    PRIMARY KEY (agency_id, shape_id, seq),
    FOREIGN KEY (agency_id, shape_id) REFERENCES shapes(agency_id, shape_id),
    FOREIGN KEY (agency_id, point_id) REFERENCES shape_points(agency_id, point_id)
);
CREATE TABLE trips (
    agency_id TEXT NOT NULL,
    trip_id TEXT NOT NULL,
    route_id TEXT NOT NULL,
    service_id TEXT NOT NULL,
    shape_id TEXT,
    direction TEXT CHECK (direction IN ('andata', 'ritorno')),
    PRIMARY KEY (agency_id, trip_id),
    FOREIGN KEY (agency_id, route_id) REFERENCES routes(agency_id, route_id),
    FOREIGN KEY (agency_id, service_id) REFERENCES calendar(agency_id, service_id),
    FOREIGN KEY (agency_id, shape_id) REFERENCES shapes(agency_id, shape_id)
);
CREATE TABLE stops (
    agency_id TEXT NOT NULL REFERENCES agency(agency_id),
    stop_id TEXT NOT NULL,
    stop_name TEXT NOT NULL,
    stop_lat REAL NOT NULL,
    stop_lon REAL NOT NULL,
    municipality_code TEXT REFERENCES municipalities(code),
    PRIMARY KEY (agency_id, stop_id)
);
CREATE TABLE stop_times (
    agency_id TEXT NOT NULL,
    trip_id TEXT NOT NULL,
    stop_sequence INTEGER NOT NULL,
    stop_id TEXT NOT NULL,
    arrival_time INTEGER,
    departure_time INTEGER,
    PRIMARY KEY (agency_id, trip_id, stop_sequence),
    FOREIGN KEY (agency_id, trip_id) REFERENCES trips(agency_id, trip_id),
    FOREIGN KEY (agency_id, stop_id) REFERENCES stops(agency_id, stop_id)
);
CREATE VIEW route_geometry AS
SELECT r.agency_id, r.route_id, r.route_short_name, t.direction, t.shape_id,
       'shape_point' AS kind, ss.seq AS seq, NULL AS stop_id, NULL AS stop_name,
       sp.lat AS lat, sp.lon AS lon
FROM routes r
JOIN trips t ON t.agency_id = r.agency_id AND t.route_id = r.route_id
JOIN shape_sequences ss ON ss.agency_id = t.agency_id AND ss.shape_id = t.shape_id
JOIN shape_points sp ON sp.agency_id = ss.agency_id AND sp.point_id = ss.point_id
UNION
SELECT r.agency_id, r.route_id, r.route_short_name, t.direction, t.shape_id,
       'stop', st.stop_sequence, s.stop_id, s.stop_name, s.stop_lat, s.stop_lon
FROM routes r
JOIN trips t ON t.agency_id = r.agency_id AND t.route_id = r.route_id
JOIN stop_times st ON st.agency_id = t.agency_id AND st.trip_id = t.trip_id
JOIN stops s ON s.agency_id = st.agency_id AND s.stop_id = st.stop_id;
CREATE INDEX trips_by_route ON trips(agency_id, route_id);
CREATE INDEX stop_times_by_stop ON stop_times(agency_id, stop_id);
CREATE INDEX stops_by_municipality ON stops(municipality_code);
"#;

/// Creates a fresh database at `path` (replacing any existing file) and loads
/// every normalized bundle and the municipality boundaries into it.
pub fn build_database(
    path: &Path,
    bundles: &[FeedBundle],
    municipalities: &[MunicipalityRecord],
) -> Result<DatabaseHandle, IngestError> {
    if let Some(b) = bundles.iter().find(|b| !b.normalized) {
        return Err(IngestError::NotNormalized(b.agency_tag.clone()));
    }
    if path.exists() {
        std::fs::remove_file(path).map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let mut conn = Connection::open(path)?;
    conn.pragma_update(None, "foreign_keys", true)?;
    conn.execute_batch(SCHEMA_SQL)?;

    let tx = conn.transaction()?;
    load_municipalities_table(&tx, municipalities)?;
    for bundle in bundles {
        load_bundle(&tx, bundle)?;
    }
    tx.commit()?;
    Ok(DatabaseHandle::new(path))
}

fn violation(table: &'static str, row: String) -> impl FnOnce(rusqlite::Error) -> IngestError {
    move |err| IngestError::ConstraintViolation {
        table,
        row,
        message: err.to_string(),
    }
}

fn load_municipalities_table(
    tx: &Transaction<'_>,
    municipalities: &[MunicipalityRecord],
) -> Result<(), IngestError> {
    let mut stmt =
        tx.prepare("INSERT INTO municipalities (code, name, geometry) VALUES (?1, ?2, ?3)")?;
    for m in municipalities {
        stmt.execute(params![m.code, m.name, geometry_json(&m.boundary)])
            .map_err(violation("municipalities", format!("code={}", m.code)))?;
    }
    Ok(())
}

fn geometry_json(boundary: &[Polygon]) -> String {
    let ring = |r: &Vec<(f64, f64)>| r.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>();
    let polygon = |p: &Polygon| {
        std::iter::once(&p.exterior)
            .chain(&p.holes)
            .map(ring)
            .collect::<Vec<_>>()
    };
    let coords: Vec<_> = boundary.iter().map(polygon).collect();
    serde_json::json!({ "type": "MultiPolygon", "coordinates": coords }).to_string()
}

fn load_bundle(tx: &Transaction<'_>, b: &FeedBundle) -> Result<(), IngestError> {
    let mut stmt = tx.prepare("INSERT INTO agency VALUES (?1, ?2, ?3, ?4)")?;
    for a in &b.agencies {
        stmt.execute(params![
            a.agency_id,
            a.agency_name,
            a.agency_hq_city,
            a.source_agency_id
        ])
        .map_err(violation("agency", format!("agency_id={}", a.agency_id)))?;
    }

    let mut stmt = tx.prepare("INSERT INTO routes VALUES (?1, ?2, ?3, ?4)")?;
    for r in &b.routes {
        stmt.execute(params![r.agency_id, r.route_id, r.short_name, r.long_name])
            .map_err(violation(
                "routes",
                format!("({}, {})", r.agency_id, r.route_id),
            ))?;
    }

    let mut stmt =
        tx.prepare("INSERT INTO calendar VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11)")?;
    for c in &b.calendars {
        let f = c.weekday_flags.map(i32::from);
        stmt.execute(params![
            c.agency_id,
            c.service_id,
            f[0],
            f[1],
            f[2],
            f[3],
            f[4],
            f[5],
            f[6],
            c.start_date.format("%Y-%m-%d").to_string(),
            c.end_date.format("%Y-%m-%d").to_string(),
        ])
        .map_err(violation(
            "calendar",
            format!("({}, {})", c.agency_id, c.service_id),
        ))?;
    }

    let decomposed = decompose_shapes(b);
    let mut stmt = tx.prepare("INSERT INTO shapes VALUES (?1, ?2)")?;
    for s in &decomposed.shapes {
        stmt.execute(params![s.agency_id, s.shape_id])
            .map_err(violation(
                "shapes",
                format!("({}, {})", s.agency_id, s.shape_id),
            ))?;
    }
    let mut stmt = tx.prepare("INSERT INTO shape_points VALUES (?1, ?2, ?3, ?4)")?;
    for p in &decomposed.points {
        stmt.execute(params![p.agency_id, p.point_id, p.lat, p.lon])
            .map_err(violation(
                "shape_points",
                format!("({}, {})", p.agency_id, p.point_id),
            ))?;
    }
    let mut stmt = tx.prepare("INSERT INTO shape_sequences VALUES (?1, ?2, ?3, ?4)")?;
    for s in &decomposed.sequences {
        stmt.execute(params![s.agency_id, s.shape_id, s.seq, s.point_id])
            .map_err(violation(
                "shape_sequences",
                format!("({}, {}, {})", s.agency_id, s.shape_id, s.seq),
            ))?;
    }

    let mut stmt = tx.prepare("INSERT INTO trips VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
    for t in &b.trips {
        stmt.execute(params![
            t.agency_id,
            t.trip_id,
            t.route_id,
            t.service_id,
            t.shape_id,
            t.direction.map(|d| d.as_str())
        ])
        .map_err(violation(
            "trips",
            format!("({}, {})", t.agency_id, t.trip_id),
        ))?;
    }

    let mut stmt = tx.prepare("INSERT INTO stops VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
    for s in &b.stops {
        stmt.execute(params![
            s.agency_id,
            s.stop_id,
            s.name,
            s.lat,
            s.lon,
            s.municipality_code
        ])
        .map_err(violation(
            "stops",
            format!("({}, {})", s.agency_id, s.stop_id),
        ))?;
    }

    let mut stmt = tx.prepare("INSERT INTO stop_times VALUES (?1, ?2, ?3, ?4, ?5, ?6)")?;
    for st in &b.stop_times {
        stmt.execute(params![
            st.agency_id,
            st.trip_id,
            st.stop_sequence,
            st.stop_id,
            st.arrival,
            st.departure
        ])
        .map_err(violation(
            "stop_times",
            format!("({}, {}, {})", st.agency_id, st.trip_id, st.stop_sequence),
        ))?;
    }
    Ok(())
}
