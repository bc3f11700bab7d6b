use std::fmt;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Trip direction as stored in the database. GTFS encodes it as 0/1; the
/// database only ever holds these two strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(rename = "andata")]
    Outbound,
    #[serde(rename = "ritorno")]
    Inbound,
}

impl Direction {
    pub const OUTBOUND: &'static str = "andata";
    pub const INBOUND: &'static str = "ritorno";

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Outbound => Self::OUTBOUND,
            Direction::Inbound => Self::INBOUND,
        }
    }

    /// Accepts the GTFS numeric form as well as the stored string form.
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "0" | "andata" | "outbound" => Some(Direction::Outbound),
            "1" | "ritorno" | "inbound" => Some(Direction::Inbound),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgencyRecord {
    pub agency_id: String,
    /// The `agency_id` as written in the source feed, before key augmentation.
    pub source_agency_id: String,
    pub agency_name: String,
    pub agency_hq_city: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRecord {
    pub agency_id: String,
    pub route_id: String,
    pub short_name: String,
    pub long_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub agency_id: String,
    pub trip_id: String,
    pub route_id: String,
    pub service_id: String,
    pub shape_id: Option<String>,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceCalendar {
    pub agency_id: String,
    pub service_id: String,
    /// Monday first.
    pub weekday_flags: [bool; 7],
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopRecord {
    pub agency_id: String,
    pub stop_id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub municipality_code: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopTimeRecord {
    pub agency_id: String,
    pub trip_id: String,
    pub stop_id: String,
    pub stop_sequence: u32,
    /// Seconds since midnight of the service day; may exceed 86400.
    pub arrival: Option<u32>,
    pub departure: Option<u32>,
}

/// One row of `shapes.txt` as found in the feed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawShapePoint {
    pub agency_id: String,
    pub shape_id: String,
    pub lat: f64,
    pub lon: f64,
    pub source_sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapeRecord {
    pub agency_id: String,
    pub shape_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapePointRecord {
    pub agency_id: String,
    pub point_id: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSequenceRecord {
    pub agency_id: String,
    pub shape_id: String,
    /// 1-based position along the shape.
    pub seq: u32,
    pub point_id: i64,
}

/// A row that failed type checks and was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub file: String,
    /// 1-based line number in the source file, header included.
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.message)
    }
}

/// Every record parsed from one GTFS feed directory.
#[derive(Debug, Clone, Default)]
pub struct FeedBundle {
    pub agency_tag: String,
    pub source_path: PathBuf,
    pub agencies: Vec<AgencyRecord>,
    pub routes: Vec<RouteRecord>,
    pub trips: Vec<TripRecord>,
    pub calendars: Vec<ServiceCalendar>,
    pub shapes: Vec<RawShapePoint>,
    pub stops: Vec<StopRecord>,
    pub stop_times: Vec<StopTimeRecord>,
    pub issues: Vec<RowIssue>,
    pub normalized: bool,
}

impl FeedBundle {
    /// Record count per GTFS file.
    pub fn counts(&self) -> [(&'static str, usize); 7] {
        [
            ("agency", self.agencies.len()),
            ("routes", self.routes.len()),
            ("trips", self.trips.len()),
            ("calendar", self.calendars.len()),
            ("shapes", self.shapes.len()),
            ("stops", self.stops.len()),
            ("stop_times", self.stop_times.len()),
        ]
    }
}

/// A closed ring of (lon, lat) vertices; first vertex equals the last.
pub type Ring = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MunicipalityRecord {
    pub code: String,
    pub name: String,
    /// One entry per polygon part.
    pub boundary: Vec<Polygon>,
}
