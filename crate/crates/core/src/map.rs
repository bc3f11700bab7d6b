//! Route geometry for maps: one representative shape and the route's stops,
//! emitted as a GeoJSON FeatureCollection.

use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::digest::short_digest;
use crate::ingest::Direction;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("route {agency_id}/{route_id} does not exist")]
    UnknownRoute { agency_id: String, route_id: String },
    #[error("route {agency_id}/{route_id} has no shape to draw")]
    NoGeometry { agency_id: String, route_id: String },
    #[error("no route could be identified in the question or the result")]
    NoRoute,
    #[error("geometry is empty")]
    EmptyGeometry,
    #[error("invalid GeoJSON: {0}")]
    InvalidDocument(String),
    #[error(transparent)]
    Database(#[from] rusqlite::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RouteRef {
    pub agency_id: String,
    pub route_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapStop {
    pub stop_id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteGeometry {
    pub route: RouteRef,
    pub route_short_name: String,
    pub direction: Option<Direction>,
    pub shape_id: String,
    /// (lat, lon) in sequence order.
    pub shape_points: Vec<(f64, f64)>,
    pub stops: Vec<MapStop>,
}

/// Rounds to the 6 decimal places used in emitted documents.
pub fn round6(v: f64) -> f64 {
    format!("{v:.6}").parse().expect("formatted float parses")
}

fn direction_clause(direction: Option<Direction>) -> (&'static str, Option<&'static str>) {
    match direction {
        Some(d) => ("direction = ?3", Some(d.as_str())),
        None => ("direction IS NULL AND ?3 IS NULL", None),
    }
}

/// Loads the geometry of `route` in `direction` (outbound by default, then
/// inbound, then trips without a direction). The shape with the most points
/// wins; ties go to the smallest shape id.
pub fn fetch_route_geometry(
    conn: &Connection,
    route: &RouteRef,
    direction: Option<Direction>,
) -> Result<RouteGeometry, MapError> {
    let short_name: Option<String> = conn
        .query_row(
            "SELECT route_short_name FROM routes WHERE agency_id = ?1 AND route_id = ?2",
            params![route.agency_id, route.route_id],
            |r| r.get(0),
        )
        .optional()?;
    let Some(route_short_name) = short_name else {
        return Err(MapError::UnknownRoute {
            agency_id: route.agency_id.clone(),
            route_id: route.route_id.clone(),
        });
    };
    let no_geometry = || MapError::NoGeometry {
        agency_id: route.agency_id.clone(),
        route_id: route.route_id.clone(),
    };

    let candidates: Vec<Option<Direction>> = match direction {
        Some(d) => vec![Some(d)],
        None => vec![Some(Direction::Outbound), Some(Direction::Inbound), None],
    };
    for dir in candidates {
        let (clause, value) = direction_clause(dir);
        let has_trips: bool = conn.query_row(
            &format!("SELECT EXISTS (SELECT 1 FROM trips WHERE agency_id = ?1 AND route_id = ?2 AND {clause})"),
            params![route.agency_id, route.route_id, value],
            |r| r.get(0),
        )?;
        if !has_trips {
            continue;
        }
        let shape_id: Option<String> = conn
            .query_row(
                &format!(
                    "SELECT shape_id FROM route_geometry
                     WHERE agency_id = ?1 AND route_id = ?2 AND kind = 'shape_point' AND {clause}
                     GROUP BY shape_id ORDER BY count(*) DESC, shape_id ASC LIMIT 1"
                ),
                params![route.agency_id, route.route_id, value],
                |r| r.get(0),
            )
            .optional()?;
        let Some(shape_id) = shape_id else {
            return Err(no_geometry());
        };

        let mut stmt = conn.prepare(&format!(
            "SELECT lat, lon FROM route_geometry
             WHERE agency_id = ?1 AND route_id = ?2 AND kind = 'shape_point' AND {clause} AND shape_id = ?4
             ORDER BY seq"
        ))?;
        let shape_points = stmt
            .query_map(
                params![route.agency_id, route.route_id, value, shape_id],
                |r| Ok((round6(r.get(0)?), round6(r.get(1)?))),
            )?
            .collect::<Result<Vec<_>, _>>()?;

        let mut stmt = conn.prepare(&format!(
            "SELECT stop_id, stop_name, lat, lon FROM route_geometry
             WHERE agency_id = ?1 AND route_id = ?2 AND kind = 'stop' AND {clause} AND shape_id = ?4
             ORDER BY seq, stop_id"
        ))?;
        let mut stops: Vec<MapStop> = Vec::new();
        let rows = stmt.query_map(
            params![route.agency_id, route.route_id, value, shape_id],
            |r| {
                Ok(MapStop {
                    stop_id: r.get(0)?,
                    name: r.get(1)?,
                    lat: round6(r.get(2)?),
                    lon: round6(r.get(3)?),
                })
            },
        )?;
        for stop in rows {
            let stop = stop?;
            if !stops.iter().any(|s| s.stop_id == stop.stop_id) {
                stops.push(stop);
            }
        }
        return Ok(RouteGeometry {
            route: route.clone(),
            route_short_name,
            direction: dir,
            shape_id,
            shape_points,
            stops,
        });
    }
    Err(no_geometry())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Geometry {
    LineString { coordinates: Vec<[f64; 2]> },
    Point { coordinates: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "Feature")]
pub struct Feature {
    pub geometry: Geometry,
    pub properties: Map<String, Value>,
}

/// GeoJSON FeatureCollection with one LineString and one Point per stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "FeatureCollection")]
pub struct GeoFeatureDocument {
    pub features: Vec<Feature>,
}

fn props(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_owned(), v.clone()))
        .collect()
}

pub fn to_geo_document(g: &RouteGeometry) -> Result<GeoFeatureDocument, MapError> {
    if g.shape_points.is_empty() {
        return Err(MapError::EmptyGeometry);
    }
    let mut features = Vec::with_capacity(g.stops.len() + 1);
    features.push(Feature {
        geometry: Geometry::LineString {
            coordinates: g
                .shape_points
                .iter()
                .map(|&(lat, lon)| [round6(lon), round6(lat)])
                .collect(),
        },
        properties: props(&[
            ("kind", "shape".into()),
            ("agency_id", g.route.agency_id.clone().into()),
            ("route_id", g.route.route_id.clone().into()),
            ("route_short_name", g.route_short_name.clone().into()),
            (
                "direction",
                g.direction.map_or(Value::Null, |d| d.as_str().into()),
            ),
            ("shape_id", g.shape_id.clone().into()),
        ]),
    });
    for s in &g.stops {
        features.push(Feature {
            geometry: Geometry::Point {
                coordinates: [round6(s.lon), round6(s.lat)],
            },
            properties: props(&[
                ("kind", "stop".into()),
                ("name", s.name.clone().into()),
                ("stop_id", s.stop_id.clone().into()),
            ]),
        });
    }
    Ok(GeoFeatureDocument { features })
}

impl GeoFeatureDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("document serializes")
    }

    /// Parses and structurally validates a document.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| MapError::InvalidDocument(e.to_string()))?;
        validate_geojson(&value)?;
        serde_json::from_value(value).map_err(|e| MapError::InvalidDocument(e.to_string()))
    }

    /// Stable identifier derived from the document content.
    pub fn id(&self) -> String {
        short_digest(&self.to_json())
    }

    /// Shape points and stops back in geometry form, for round-trip checks.
    pub fn extract(&self) -> (Vec<(f64, f64)>, Vec<MapStop>) {
        let mut points = Vec::new();
        let mut stops = Vec::new();
        for f in &self.features {
            match &f.geometry {
                Geometry::LineString { coordinates } => {
                    points.extend(coordinates.iter().map(|c| (c[1], c[0])))
                }
                Geometry::Point { coordinates } => {
                    let text = |k: &str| {
                        f.properties
                            .get(k)
                            .and_then(Value::as_str)
                            .unwrap_or_default()
                            .to_owned()
                    };
                    stops.push(MapStop {
                        stop_id: text("stop_id"),
                        name: text("name"),
                        lat: coordinates[1],
                        lon: coordinates[0],
                    });
                }
            }
        }
        (points, stops)
    }
}

fn position_ok(v: &Value) -> Result<(), MapError> {
    let bad = |m: &str| Err(MapError::InvalidDocument(m.to_owned()));
    let Some(arr) = v.as_array() else {
        return bad("position is not an array");
    };
    if arr.len() != 2 {
        return bad("position must have exactly two numbers");
    }
    let (Some(lon), Some(lat)) = (arr[0].as_f64(), arr[1].as_f64()) else {
        return bad("position holds non-numbers");
    };
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return bad("position outside WGS84 bounds");
    }
    Ok(())
}

/// Structural GeoJSON rules for the documents this module emits.
pub fn validate_geojson(doc: &Value) -> Result<(), MapError> {
    let bad = |m: String| Err(MapError::InvalidDocument(m));
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return bad("top-level type must be FeatureCollection".into());
    }
    let Some(features) = doc.get("features").and_then(Value::as_array) else {
        return bad("features must be an array".into());
    };
    for (i, f) in features.iter().enumerate() {
        if f.get("type").and_then(Value::as_str) != Some("Feature") {
            return bad(format!("feature {i}: type must be Feature"));
        }
        if !f
            .get("properties")
            .is_some_and(|p| p.is_object() || p.is_null())
        {
            return bad(format!("feature {i}: properties must be an object"));
        }
        let geometry = f
            .get("geometry")
            .ok_or_else(|| MapError::InvalidDocument(format!("feature {i}: no geometry")))?;
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| MapError::InvalidDocument(format!("feature {i}: no coordinates")))?;
        match geometry.get("type").and_then(Value::as_str) {
            Some("Point") => position_ok(coords)?,
            Some("LineString") => {
                let Some(list) = coords.as_array() else {
                    return bad(format!("feature {i}: coordinates must be an array"));
                };
                if list.len() < 2 {
                    return bad(format!(
                        "feature {i}: a LineString needs at least two positions"
                    ));
                }
                list.iter().try_for_each(position_ok)?;
            }
            other => return bad(format!("feature {i}: unsupported geometry type {other:?}")),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(points: &[(f64, f64)], stops: &[(&str, f64, f64)]) -> RouteGeometry {
        RouteGeometry {
            route: RouteRef {
                agency_id: "atm".into(),
                route_id: "M1".into(),
            },
            route_short_name: "M1".into(),
            direction: Some(Direction::Outbound),
            shape_id: "SM1".into(),
            shape_points: points.to_vec(),
            stops: stops
                .iter()
                .enumerate()
                .map(|(i, (n, lat, lon))| MapStop {
                    stop_id: format!("s{i}"),
                    name: (*n).into(),
                    lat: *lat,
                    lon: *lon,
                })
                .collect(),
        }
    }

    #[test]
    fn two_points_one_stop() {
        let g = geometry(
            &[(45.46, 9.18), (45.47, 9.19)],
            &[("Duomo M1", 45.464844, 9.183333)],
        );
        let doc = to_geo_document(&g).unwrap();
        assert_eq!(doc.features.len(), 2);
        assert!(
            matches!(doc.features[0].geometry, Geometry::LineString { ref coordinates } if coordinates.len() == 2)
        );
        assert_eq!(doc.features[1].properties["name"], "Duomo M1");
        let v: Value = serde_json::from_str(&doc.to_json()).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert_eq!(v["features"][1]["geometry"]["type"], "Point");
        assert_eq!(v["features"][1]["geometry"]["coordinates"][0], 9.183333);
        validate_geojson(&v).unwrap();
    }

    #[test]
    fn empty_geometry_is_an_error() {
        assert!(matches!(
            to_geo_document(&geometry(&[], &[])),
            Err(MapError::EmptyGeometry)
        ));
    }

    #[test]
    fn round_trip_reproduces_geometry() {
        let g = geometry(
            &[(45.1, 9.1), (45.123457, 9.2), (45.3, 9.3)],
            &[("A", 45.1, 9.1), ("B", 45.3, 9.3)],
        );
        let doc = GeoFeatureDocument::parse(&to_geo_document(&g).unwrap().to_json()).unwrap();
        let (points, stops) = doc.extract();
        assert_eq!(points, g.shape_points);
        assert_eq!(stops, g.stops);
    }

    #[test]
    fn validation_rejects_bad_positions() {
        let v = serde_json::json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {}, "geometry": {"type": "Point", "coordinates": [200.0, 1.0]}}
        ]});
        assert!(validate_geojson(&v).is_err());
        let v = serde_json::json!({"type": "FeatureCollection", "features": [
            {"type": "Feature", "properties": {}, "geometry": {"type": "Point", "coordinates": [1.0]}}
        ]});
        assert!(validate_geojson(&v).is_err());
    }

    #[test]
    fn document_id_is_stable() {
        let g = geometry(&[(45.1, 9.1), (45.2, 9.2)], &[]);
        assert_eq!(
            to_geo_document(&g).unwrap().id(),
            to_geo_document(&g).unwrap().id()
        );
    }
}
