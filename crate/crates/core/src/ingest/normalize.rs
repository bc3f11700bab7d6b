use std::collections::HashSet;
use std::fmt;

use super::model::{FeedBundle, RowIssue};
use super::IngestError;

/// A child record whose reference has no parent in the same feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingReference {
    pub child_table: &'static str,
    pub child_key: (String, String),
    pub parent_table: &'static str,
    pub parent_key: (String, String),
}

impl fmt::Display for DanglingReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}({}, {}) references missing {}({}, {})",
            self.child_table,
            self.child_key.0,
            self.child_key.1,
            self.parent_table,
            self.parent_key.0,
            self.parent_key.1
        )
    }
}

/// Rewrites every record key to the composite `(agency_tag, local id)` and
/// checks that each intra-feed reference resolves.
pub fn normalize_keys(mut bundle: FeedBundle) -> Result<FeedBundle, IngestError> {
    let tag = bundle.agency_tag.clone();
    let mut dangling = Vec::new();

    // A feed maps to one agency row keyed by its tag.
    let known_agencies: HashSet<String> = bundle
        .agencies
        .iter()
        .map(|a| a.source_agency_id.clone())
        .collect();
    if bundle.agencies.len() > 1 {
        for extra in &bundle.agencies[1..] {
            bundle.issues.push(RowIssue {
                file: "agency.txt".into(),
                line: 0,
                message: format!("agency {:?} merged under tag {tag}", extra.source_agency_id),
            });
        }
        bundle.agencies.truncate(1);
    }
    for agency in &mut bundle.agencies {
        agency.agency_id = tag.clone();
    }

    for route in &mut bundle.routes {
        if !route.agency_id.is_empty() && !known_agencies.contains(&route.agency_id) {
            dangling.push(DanglingReference {
                child_table: "routes",
                child_key: (tag.clone(), route.route_id.clone()),
                parent_table: "agency",
                parent_key: (tag.clone(), route.agency_id.clone()),
            });
        }
        route.agency_id = tag.clone();
    }

    let route_ids: HashSet<&str> = bundle.routes.iter().map(|r| r.route_id.as_str()).collect();
    let service_ids: HashSet<&str> = bundle
        .calendars
        .iter()
        .map(|c| c.service_id.as_str())
        .collect();
    let shape_ids: HashSet<&str> = bundle.shapes.iter().map(|s| s.shape_id.as_str()).collect();
    for trip in &bundle.trips {
        let child_key = (tag.clone(), trip.trip_id.clone());
        if !route_ids.contains(trip.route_id.as_str()) {
            dangling.push(DanglingReference {
                child_table: "trips",
                child_key: child_key.clone(),
                parent_table: "routes",
                parent_key: (tag.clone(), trip.route_id.clone()),
            });
        }
        if !service_ids.contains(trip.service_id.as_str()) {
            dangling.push(DanglingReference {
                child_table: "trips",
                child_key: child_key.clone(),
                parent_table: "calendar",
                parent_key: (tag.clone(), trip.service_id.clone()),
            });
        }
        if let Some(shape_id) = &trip.shape_id {
            if !shape_ids.contains(shape_id.as_str()) {
                dangling.push(DanglingReference {
                    child_table: "trips",
                    child_key,
                    parent_table: "shapes",
                    parent_key: (tag.clone(), shape_id.clone()),
                });
            }
        }
    }

    let trip_ids: HashSet<&str> = bundle.trips.iter().map(|t| t.trip_id.as_str()).collect();
    let stop_ids: HashSet<&str> = bundle.stops.iter().map(|s| s.stop_id.as_str()).collect();
    for st in &bundle.stop_times {
        let child_key = (tag.clone(), format!("{}#{}", st.trip_id, st.stop_sequence));
        if !trip_ids.contains(st.trip_id.as_str()) {
            dangling.push(DanglingReference {
                child_table: "stop_times",
                child_key: child_key.clone(),
                parent_table: "trips",
                parent_key: (tag.clone(), st.trip_id.clone()),
            });
        }
        if !stop_ids.contains(st.stop_id.as_str()) {
            dangling.push(DanglingReference {
                child_table: "stop_times",
                child_key,
                parent_table: "stops",
                parent_key: (tag.clone(), st.stop_id.clone()),
            });
        }
    }

    if !dangling.is_empty() {
        return Err(IngestError::DanglingReferences(dangling));
    }

    for trip in &mut bundle.trips {
        trip.agency_id = tag.clone();
    }
    for cal in &mut bundle.calendars {
        cal.agency_id = tag.clone();
    }
    for point in &mut bundle.shapes {
        point.agency_id = tag.clone();
    }
    for stop in &mut bundle.stops {
        stop.agency_id = tag.clone();
    }
    for st in &mut bundle.stop_times {
        st.agency_id = tag.clone();
    }
    bundle.normalized = true;
    Ok(bundle)
}
