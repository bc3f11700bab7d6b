use std::collections::HashMap;

use super::model::{FeedBundle, ShapePointRecord, ShapeRecord, ShapeSequenceRecord};

/// `shapes.txt` split into shapes, distinct points and ordered sequences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecomposedShapes {
    pub shapes: Vec<ShapeRecord>,
    pub points: Vec<ShapePointRecord>,
    pub sequences: Vec<ShapeSequenceRecord>,
}

impl DecomposedShapes {
    /// Ordered (lat, lon) list of one shape rebuilt from the three relations.
    pub fn polyline(&self, agency_id: &str, shape_id: &str) -> Vec<(f64, f64)> {
        let points: HashMap<i64, (f64, f64)> = self
            .points
            .iter()
            .filter(|p| p.agency_id == agency_id)
            .map(|p| (p.point_id, (p.lat, p.lon)))
            .collect();
        let mut seq: Vec<&ShapeSequenceRecord> = self
            .sequences
            .iter()
            .filter(|s| s.agency_id == agency_id && s.shape_id == shape_id)
            .collect();
        seq.sort_by_key(|s| s.seq);
        seq.iter().map(|s| points[&s.point_id]).collect()
    }
}

/// Identical coordinates within an agency share one point row. Shape order
/// follows first appearance in the feed; each shape's sequence follows
/// `shape_pt_sequence` and is renumbered 1..n.
pub fn decompose_shapes(bundle: &FeedBundle) -> DecomposedShapes {
    let mut out = DecomposedShapes::default();
    let mut shape_rows: HashMap<(&str, &str), Vec<usize>> = HashMap::new();
    for (i, raw) in bundle.shapes.iter().enumerate() {
        let key = (raw.agency_id.as_str(), raw.shape_id.as_str());
        shape_rows
            .entry(key)
            .or_insert_with(|| {
                out.shapes.push(ShapeRecord {
                    agency_id: raw.agency_id.clone(),
                    shape_id: raw.shape_id.clone(),
                });
                Vec::new()
            })
            .push(i);
    }

    let mut point_ids: HashMap<(&str, u64, u64), i64> = HashMap::new();
    let mut next_id: HashMap<&str, i64> = HashMap::new();
    for shape in &out.shapes {
        let mut rows = shape_rows[&(shape.agency_id.as_str(), shape.shape_id.as_str())].clone();
        rows.sort_by_key(|&i| bundle.shapes[i].source_sequence);
        for (pos, &i) in rows.iter().enumerate() {
            let raw = &bundle.shapes[i];
            let key = (
                raw.agency_id.as_str(),
                coord_bits(raw.lat),
                coord_bits(raw.lon),
            );
            let point_id = *point_ids.entry(key).or_insert_with(|| {
                let counter = next_id.entry(raw.agency_id.as_str()).or_insert(0);
                *counter += 1;
                out.points.push(ShapePointRecord {
                    agency_id: raw.agency_id.clone(),
                    point_id: *counter,
                    lat: raw.lat,
                    lon: raw.lon,
                });
                *counter
            });
            out.sequences.push(ShapeSequenceRecord {
                agency_id: shape.agency_id.clone(),
                shape_id: shape.shape_id.clone(),
                seq: pos as u32 + 1,
                point_id,
            });
        }
    }
    out
}

fn coord_bits(v: f64) -> u64 {
    // fold -0.0 into 0.0
    (v + 0.0).to_bits()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::model::RawShapePoint;

    fn raw(shape: &str, lat: f64, lon: f64, seq: u32) -> RawShapePoint {
        RawShapePoint {
            agency_id: "A".into(),
            shape_id: shape.into(),
            lat,
            lon,
            source_sequence: seq,
        }
    }

    fn bundle(points: Vec<RawShapePoint>) -> FeedBundle {
        FeedBundle {
            shapes: points,
            ..Default::default()
        }
    }

    #[test]
    fn four_distinct_points() {
        let b = bundle(vec![
            raw("s", 1.0, 1.0, 1),
            raw("s", 2.0, 2.0, 2),
            raw("s", 3.0, 3.0, 3),
            raw("s", 4.0, 4.0, 4),
        ]);
        let d = decompose_shapes(&b);
        assert_eq!(
            (d.shapes.len(), d.points.len(), d.sequences.len()),
            (1, 4, 4)
        );
    }

    #[test]
    fn repeated_coordinates_share_a_point() {
        let b = bundle(vec![
            raw("s", 1.0, 1.0, 1),
            raw("s", 2.0, 2.0, 2),
            raw("s", 3.0, 3.0, 3),
            raw("s", 2.0, 2.0, 4),
        ]);
        let d = decompose_shapes(&b);
        assert_eq!(
            (d.shapes.len(), d.points.len(), d.sequences.len()),
            (1, 3, 4)
        );
        assert_eq!(d.sequences[1].point_id, d.sequences[3].point_id);
    }

    #[test]
    fn sequence_follows_source_order_not_file_order() {
        let b = bundle(vec![
            raw("s", 3.0, 3.0, 30),
            raw("s", 1.0, 1.0, 10),
            raw("s", 2.0, 2.0, 20),
        ]);
        let d = decompose_shapes(&b);
        assert_eq!(
            d.polyline("A", "s"),
            vec![(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]
        );
        let seqs: Vec<u32> = d.sequences.iter().map(|s| s.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
    }

    #[test]
    fn empty_shapes_file_gives_empty_relations() {
        assert_eq!(
            decompose_shapes(&bundle(vec![])),
            DecomposedShapes::default()
        );
    }
}
