use std::path::Path;

use serde_json::Value;

use super::model::{MunicipalityRecord, Polygon, Ring, StopRecord};
use super::IngestError;

/// Reads a GeoJSON FeatureCollection whose features carry `code` and `name`
/// properties and Polygon or MultiPolygon geometry.
pub fn load_municipalities(path: &Path) -> Result<Vec<MunicipalityRecord>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_municipalities(&text)
}

pub fn parse_municipalities(text: &str) -> Result<Vec<MunicipalityRecord>, IngestError> {
    let doc: Value =
        serde_json::from_str(text).map_err(|e| malformed(None, format!("invalid JSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(malformed(
            None,
            "top-level object is not a FeatureCollection".into(),
        ));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(None, "missing features array".into()))?;

    features
        .iter()
        .enumerate()
        .map(|(i, feature)| {
            let props = feature.get("properties").unwrap_or(&Value::Null);
            let code = property_text(props, "code")
                .ok_or_else(|| malformed(Some(i), "missing code property".into()))?;
            let name = property_text(props, "name")
                .ok_or_else(|| malformed(Some(i), "missing name property".into()))?;
            let geometry = feature
                .get("geometry")
                .ok_or_else(|| malformed(Some(i), "missing geometry".into()))?;
            let coords = geometry
                .get("coordinates")
                .ok_or_else(|| malformed(Some(i), "missing coordinates".into()))?;
            let boundary = match geometry.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![parse_polygon(coords).map_err(|m| malformed(Some(i), m))?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| {
                        malformed(Some(i), "MultiPolygon coordinates are not an array".into())
                    })?
                    .iter()
                    .map(parse_polygon)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|m| malformed(Some(i), m))?,
                other => {
                    return Err(malformed(
                        Some(i),
                        format!("unsupported geometry type {other:?}"),
                    ))
                }
            };
            if boundary.is_empty() {
                return Err(malformed(Some(i), "empty MultiPolygon".into()));
            }
            Ok(MunicipalityRecord {
                code,
                name,
                boundary,
            })
        })
        .collect()
}

fn malformed(feature: Option<usize>, reason: String) -> IngestError {
    IngestError::MalformedGeometry { feature, reason }
}

fn property_text(props: &Value, key: &str) -> Option<String> {
    match props.get(key)? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_owned()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_polygon(value: &Value) -> Result<Polygon, String> {
    let rings = value.as_array().ok_or("polygon is not an array of rings")?;
    let mut rings = rings.iter().map(parse_ring);
    let exterior = rings.next().ok_or("polygon has no rings")??;
    let holes = rings.collect::<Result<Vec<_>, _>>()?;
    Ok(Polygon { exterior, holes })
}

fn parse_ring(value: &Value) -> Result<Ring, String> {
    let positions = value
        .as_array()
        .ok_or("ring is not an array of positions")?;
    let ring: Ring = positions
        .iter()
        .map(|p| {
            let pair = p
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or("position needs two numbers")?;
            let lon = pair[0].as_f64().ok_or("non-numeric longitude")?;
            let lat = pair[1].as_f64().ok_or("non-numeric latitude")?;
            if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
                return Err("position outside WGS84 bounds");
            }
            Ok((lon, lat))
        })
        .collect::<Result<_, _>>()?;
    if ring.len() < 4 {
        return Err(format!(
            "ring has {} positions, at least 4 required",
            ring.len()
        ));
    }
    if ring.first() != ring.last() {
        return Err("ring is not closed".into());
    }
    Ok(ring)
}

/// Where a point lies relative to a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingSide {
    Inside,
    Boundary,
    Outside,
}

/// Crossing-number test with an explicit on-edge check.
fn ring_side(ring: &[(f64, f64)], x: f64, y: f64) -> RingSide {
    let mut inside = false;
    for edge in ring.windows(2) {
        let ((x1, y1), (x2, y2)) = (edge[0], edge[1]);
        if on_segment(x, y, x1, y1, x2, y2) {
            return RingSide::Boundary;
        }
        if (y1 > y) != (y2 > y) {
            let x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
            if x < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        RingSide::Inside
    } else {
        RingSide::Outside
    }
}

fn on_segment(x: f64, y: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
    let scale = (x2 - x1).abs().max((y2 - y1).abs()).max(1e-12);
    cross.abs() <= 1e-12 * scale
        && x >= x1.min(x2)
        && x <= x1.max(x2)
        && y >= y1.min(y2)
        && y <= y1.max(y2)
}

impl Polygon {
    /// Boundary points count as contained, including hole boundaries.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        match ring_side(&self.exterior, lon, lat) {
            RingSide::Outside => false,
            RingSide::Boundary => true,
            RingSide::Inside => self
                .holes
                .iter()
                .all(|h| ring_side(h, lon, lat) != RingSide::Inside),
        }
    }

    fn bbox(&self) -> BBox {
        BBox::of(&self.exterior)
    }
}

impl MunicipalityRecord {
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        self.boundary.iter().any(|p| p.contains(lon, lat))
    }
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl BBox {
    fn of(ring: &[(f64, f64)]) -> Self {
        ring.iter().fold(
            BBox {
                min_x: f64::INFINITY,
                min_y: f64::INFINITY,
                max_x: f64::NEG_INFINITY,
                max_y: f64::NEG_INFINITY,
            },
            |b, &(x, y)| BBox {
                min_x: b.min_x.min(x),
                min_y: b.min_y.min(y),
                max_x: b.max_x.max(x),
                max_y: b.max_y.max(y),
            },
        )
    }

    fn union(self, o: BBox) -> BBox {
        BBox {
            min_x: self.min_x.min(o.min_x),
            min_y: self.min_y.min(o.min_y),
            max_x: self.max_x.max(o.max_x),
            max_y: self.max_y.max(o.max_y),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// Uniform grid over municipality bounding boxes. Candidate lists keep file
/// order so the first containing municipality wins.
pub struct MunicipalityIndex<'a> {
    municipalities: &'a [MunicipalityRecord],
    bboxes: Vec<BBox>,
    extent: Option<BBox>,
    cells: Vec<Vec<usize>>,
    side: usize,
}

impl<'a> MunicipalityIndex<'a> {
    pub fn new(municipalities: &'a [MunicipalityRecord]) -> Self {
        let bboxes: Vec<BBox> = municipalities
            .iter()
            .map(|m| {
                m.boundary
                    .iter()
                    .map(Polygon::bbox)
                    .reduce(BBox::union)
                    .expect("boundary is non-empty")
            })
            .collect();
        let extent = bboxes.iter().copied().reduce(BBox::union);
        let side = ((municipalities.len() as f64).sqrt().ceil() as usize * 2).clamp(1, 256);
        let mut index = Self {
            municipalities,
            bboxes,
            extent,
            cells: vec![Vec::new(); side * side],
            side,
        };
        for i in 0..index.bboxes.len() {
            let b = index.bboxes[i];
            let (c0, r0) = index.cell_of(b.min_x, b.min_y);
            let (c1, r1) = index.cell_of(b.max_x, b.max_y);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * side + c].push(i);
                }
            }
        }
        index
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let Some(e) = self.extent else { return (0, 0) };
        let fit = |v: f64, lo: f64, hi: f64| {
            let span = (hi - lo).max(1e-12);
            (((v - lo) / span * self.side as f64).floor().max(0.0) as usize).min(self.side - 1)
        };
        (fit(x, e.min_x, e.max_x), fit(y, e.min_y, e.max_y))
    }

    /// The first municipality (in file order) containing the point.
    pub fn locate(&self, lon: f64, lat: f64) -> Option<&'a MunicipalityRecord> {
        if !self.extent?.contains(lon, lat) {
            return None;
        }
        let (c, r) = self.cell_of(lon, lat);
        self.cells[r * self.side + c]
            .iter()
            .copied()
            .filter(|&i| self.bboxes[i].contains(lon, lat))
            .find(|&i| self.municipalities[i].contains(lon, lat))
            .map(|i| &self.municipalities[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentReport {
    pub matched: usize,
    /// (agency_id, stop_id) of stops outside every municipality.
    pub unmatched: Vec<(String, String)>,
}

/// Sets each stop's municipality to the first polygon containing it; stops
/// outside every polygon keep an empty code and are logged.
pub fn assign_stop_municipality(
    stops: &mut [StopRecord],
    municipalities: &[MunicipalityRecord],
) -> AssignmentReport {
    let index = MunicipalityIndex::new(municipalities);
    let mut report = AssignmentReport::default();
    for stop in stops.iter_mut() {
        match index.locate(stop.lon, stop.lat) {
            Some(m) => {
                stop.municipality_code = Some(m.code.clone());
                report.matched += 1;
            }
            None => {
                stop.municipality_code = None;
                tracing::warn!(agency = %stop.agency_id, stop = %stop.stop_id, lat = stop.lat, lon = stop.lon, "stop is outside every municipality");
                report
                    .unmatched
                    .push((stop.agency_id.clone(), stop.stop_id.clone()));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(code: &str, x0: f64, y0: f64, size: f64) -> MunicipalityRecord {
        MunicipalityRecord {
            code: code.into(),
            name: code.into(),
            boundary: vec![Polygon {
                exterior: vec![
                    (x0, y0),
                    (x0 + size, y0),
                    (x0 + size, y0 + size),
                    (x0, y0 + size),
                    (x0, y0),
                ],
                holes: vec![],
            }],
        }
    }

    fn stop(lat: f64, lon: f64) -> StopRecord {
        StopRecord {
            agency_id: "A".into(),
            stop_id: "s".into(),
            name: "s".into(),
            lat,
            lon,
            municipality_code: None,
        }
    }

    const TWO_SQUARES: &str = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"code":"001","name":"One"},
         "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
        {"type":"Feature","properties":{"code":2,"name":"Two"},
         "geometry":{"type":"Polygon","coordinates":[[[1,0],[2,0],[2,1],[1,1],[1,0]]]}}]}"#;

    #[test]
    fn parses_two_squares() {
        let ms = parse_municipalities(TWO_SQUARES).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[1].code, "2");
        assert_eq!(ms[0].boundary[0].exterior.len(), 5);
    }

    #[test]
    fn unclosed_ring_is_malformed() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{"code":"1","name":"Open"},
             "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0.5]]]}}]}"#;
        let err = parse_municipalities(text).unwrap_err();
        assert!(
            matches!(
                err,
                IngestError::MalformedGeometry {
                    feature: Some(0),
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn centroid_is_assigned() {
        let ms = vec![square("M", 0.0, 0.0, 2.0), square("N", 5.0, 5.0, 1.0)];
        let mut stops = vec![stop(1.0, 1.0), stop(5.5, 5.5)];
        let report = assign_stop_municipality(&mut stops, &ms);
        assert_eq!(stops[0].municipality_code.as_deref(), Some("M"));
        assert_eq!(stops[1].municipality_code.as_deref(), Some("N"));
        assert_eq!(report.matched, 2);
    }

    #[test]
    fn stop_outside_everything_stays_empty() {
        let ms = vec![square("M", 0.0, 0.0, 1.0)];
        let mut stops = vec![stop(10.0, 10.0)];
        let report = assign_stop_municipality(&mut stops, &ms);
        assert_eq!(stops[0].municipality_code, None);
        assert_eq!(report.unmatched, vec![("A".to_string(), "s".to_string())]);
    }

    #[test]
    fn shared_border_goes_to_first_in_file_order() {
        let ms = parse_municipalities(TWO_SQUARES).unwrap();
        let mut stops = vec![stop(0.5, 1.0)];
        assign_stop_municipality(&mut stops, &ms);
        assert_eq!(stops[0].municipality_code.as_deref(), Some("001"));
        let reversed: Vec<_> = ms.into_iter().rev().collect();
        assign_stop_municipality(&mut stops, &reversed);
        assert_eq!(stops[0].municipality_code.as_deref(), Some("2"));
    }

    #[test]
    fn holes_exclude_their_interior() {
        let mut m = square("M", 0.0, 0.0, 4.0);
        m.boundary[0].holes.push(vec![
            (1.0, 1.0),
            (3.0, 1.0),
            (3.0, 3.0),
            (1.0, 3.0),
            (1.0, 1.0),
        ]);
        assert!(!m.contains(2.0, 2.0));
        assert!(m.contains(0.5, 0.5));
        assert!(m.contains(1.0, 2.0), "hole edge belongs to the polygon");
    }
}
