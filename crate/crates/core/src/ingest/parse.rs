use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;

use super::model::*;
use super::IngestError;

pub const DEFAULT_MALFORMED_ROW_CAP: usize = 100;

/// GTFS files every feed must provide.
pub const REQUIRED_FILES: [&str; 7] = [
    "agency",
    "routes",
    "trips",
    "calendar",
    "shapes",
    "stops",
    "stop_times",
];

#[derive(Debug, Clone)]
pub struct ParseOptions {
    /// Malformed rows tolerated per file before parsing aborts.
    pub max_malformed_per_file: usize,
    /// Overrides `agency_hq_city` for every agency in the feed.
    pub hq_city: Option<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_malformed_per_file: DEFAULT_MALFORMED_ROW_CAP,
            hq_city: None,
        }
    }
}

pub fn parse_feed(dir: &Path, agency_tag: &str) -> Result<FeedBundle, IngestError> {
    parse_feed_with(dir, agency_tag, &ParseOptions::default())
}

pub fn parse_feed_with(
    dir: &Path,
    agency_tag: &str,
    opts: &ParseOptions,
) -> Result<FeedBundle, IngestError> {
    if agency_tag.trim().is_empty() {
        return Err(IngestError::InvalidTag(agency_tag.to_owned()));
    }
    for name in REQUIRED_FILES {
        if !dir.join(format!("{name}.txt")).is_file() {
            return Err(IngestError::MissingFile {
                file: name.to_owned(),
                dir: dir.to_path_buf(),
            });
        }
    }

    let mut issues = Vec::new();
    let mut agencies = read_table(dir, "agency", &["agency_name"], opts, &mut issues, |row| {
        Ok(AgencyRecord {
            agency_id: String::new(),
            source_agency_id: row.optional("agency_id").unwrap_or_default().to_owned(),
            agency_name: row.required("agency_name")?.to_owned(),
            agency_hq_city: row
                .optional("agency_hq_city")
                .unwrap_or_default()
                .to_owned(),
        })
    })?;
    if let Some(city) = &opts.hq_city {
        for agency in &mut agencies {
            agency.agency_hq_city = city.clone();
        }
    }

    let routes = read_table(dir, "routes", &["route_id"], opts, &mut issues, |row| {
        Ok(RouteRecord {
            agency_id: row.optional("agency_id").unwrap_or_default().to_owned(),
            route_id: row.required("route_id")?.to_owned(),
            short_name: row
                .optional("route_short_name")
                .unwrap_or_default()
                .to_owned(),
            long_name: row
                .optional("route_long_name")
                .unwrap_or_default()
                .to_owned(),
        })
    })?;

    let trips = read_table(
        dir,
        "trips",
        &["route_id", "service_id", "trip_id"],
        opts,
        &mut issues,
        |row| {
            let direction = match row.optional("direction_id") {
                None => None,
                Some(raw) => Some(
                    Direction::parse(raw).ok_or_else(|| format!("invalid direction_id {raw:?}"))?,
                ),
            };
            Ok(TripRecord {
                agency_id: String::new(),
                trip_id: row.required("trip_id")?.to_owned(),
                route_id: row.required("route_id")?.to_owned(),
                service_id: row.required("service_id")?.to_owned(),
                shape_id: row.optional("shape_id").map(str::to_owned),
                direction,
            })
        },
    )?;

    const DAYS: [&str; 7] = [
        "monday",
        "tuesday",
        "wednesday",
        "thursday",
        "friday",
        "saturday",
        "sunday",
    ];
    let mut calendar_cols = vec!["service_id", "start_date", "end_date"];
    calendar_cols.extend(DAYS);
    let calendars = read_table(dir, "calendar", &calendar_cols, opts, &mut issues, |row| {
        let mut weekday_flags = [false; 7];
        for (flag, day) in weekday_flags.iter_mut().zip(DAYS) {
            *flag = match row.required(day)? {
                "1" => true,
                "0" => false,
                other => return Err(format!("invalid {day} flag {other:?}")),
            };
        }
        let start_date = parse_gtfs_date(row.required("start_date")?)?;
        let end_date = parse_gtfs_date(row.required("end_date")?)?;
        if start_date > end_date {
            return Err(format!(
                "start_date {start_date} is after end_date {end_date}"
            ));
        }
        Ok(ServiceCalendar {
            agency_id: String::new(),
            service_id: row.required("service_id")?.to_owned(),
            weekday_flags,
            start_date,
            end_date,
        })
    })?;

    let shape_cols = [
        "shape_id",
        "shape_pt_lat",
        "shape_pt_lon",
        "shape_pt_sequence",
    ];
    let shapes = read_table(dir, "shapes", &shape_cols, opts, &mut issues, |row| {
        let (lat, lon) =
            parse_coordinates(row.required("shape_pt_lat")?, row.required("shape_pt_lon")?)?;
        Ok(RawShapePoint {
            agency_id: String::new(),
            shape_id: row.required("shape_id")?.to_owned(),
            lat,
            lon,
            source_sequence: parse_u32(row.required("shape_pt_sequence")?, "shape_pt_sequence")?,
        })
    })?;

    let stop_cols = ["stop_id", "stop_name", "stop_lat", "stop_lon"];
    let stops = read_table(dir, "stops", &stop_cols, opts, &mut issues, |row| {
        let (lat, lon) = parse_coordinates(row.required("stop_lat")?, row.required("stop_lon")?)?;
        Ok(StopRecord {
            agency_id: String::new(),
            stop_id: row.required("stop_id")?.to_owned(),
            name: row.optional("stop_name").unwrap_or_default().to_owned(),
            lat,
            lon,
            municipality_code: None,
        })
    })?;

    let st_cols = [
        "trip_id",
        "stop_id",
        "stop_sequence",
        "arrival_time",
        "departure_time",
    ];
    let stop_times = read_table(dir, "stop_times", &st_cols, opts, &mut issues, |row| {
        let arrival = row
            .optional("arrival_time")
            .map(parse_gtfs_time)
            .transpose()?;
        let departure = row
            .optional("departure_time")
            .map(parse_gtfs_time)
            .transpose()?;
        if let (Some(a), Some(d)) = (arrival, departure) {
            if a > d {
                return Err(format!("arrival {a}s is after departure {d}s"));
            }
        }
        Ok(StopTimeRecord {
            agency_id: String::new(),
            trip_id: row.required("trip_id")?.to_owned(),
            stop_id: row.required("stop_id")?.to_owned(),
            stop_sequence: parse_u32(row.required("stop_sequence")?, "stop_sequence")?,
            arrival,
            departure,
        })
    })?;

    for (file, empty) in [
        ("agency", agencies.is_empty()),
        ("routes", routes.is_empty()),
        ("trips", trips.is_empty()),
        ("stops", stops.is_empty()),
    ] {
        if empty {
            return Err(IngestError::EmptyFile(file.to_owned()));
        }
    }

    Ok(FeedBundle {
        agency_tag: agency_tag.to_owned(),
        source_path: dir.to_path_buf(),
        agencies,
        routes,
        trips,
        calendars,
        shapes,
        stops,
        stop_times,
        issues,
        normalized: false,
    })
}

/// Field access for one CSV record by header name.
struct RowView<'a> {
    columns: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl<'a> RowView<'a> {
    fn optional(&self, column: &str) -> Option<&'a str> {
        let idx = *self.columns.get(column)?;
        let value = self.record.get(idx)?.trim();
        (!value.is_empty()).then_some(value)
    }

    fn required(&self, column: &str) -> Result<&'a str, String> {
        self.optional(column)
            .ok_or_else(|| format!("missing value for {column}"))
    }
}

fn read_table<T>(
    dir: &Path,
    name: &str,
    required_columns: &[&str],
    opts: &ParseOptions,
    issues: &mut Vec<crate::ingest::RowIssue>,
    mut parse_row: impl FnMut(&RowView<'_>) -> Result<T, String>,
) -> Result<Vec<T>, IngestError> {
    let file_name = format!("{name}.txt");
    let path = dir.join(&file_name);
    let file = File::open(&path).map_err(|source| IngestError::Io {
        path: path.clone(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            file: file_name.clone(),
            source,
        })?
        .clone();
    let columns: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| {
            (
                h.trim_start_matches('\u{feff}').trim().to_ascii_lowercase(),
                i,
            )
        })
        .collect();
    for col in required_columns {
        if !columns.contains_key(*col) {
            return Err(IngestError::MissingColumn {
                file: file_name,
                column: (*col).to_owned(),
            });
        }
    }

    let mut out = Vec::new();
    let mut malformed = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let line;
        let outcome = match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                line = record.position().map_or(0, |p| p.line());
                parse_row(&RowView {
                    columns: &columns,
                    record: &record,
                })
            }
            Err(err) => {
                line = err.position().map_or(0, |p| p.line());
                Err(err.to_string())
            }
        };
        match outcome {
            Ok(value) => out.push(value),
            Err(message) => {
                let issue = RowIssue {
                    file: file_name.clone(),
                    line,
                    message,
                };
                malformed += 1;
                if malformed > opts.max_malformed_per_file {
                    return Err(IngestError::MalformedRow(issue));
                }
                tracing::warn!(%issue, "skipping malformed row");
                issues.push(issue);
            }
        }
    }
    Ok(out)
}

pub fn parse_gtfs_date(raw: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(raw.trim(), "%Y%m%d").map_err(|_| format!("invalid date {raw:?}"))
}

/// `H:MM:SS` or `HH:MM:SS`; hours may run past 24 for trips after midnight.
pub fn parse_gtfs_time(raw: &str) -> Result<u32, String> {
    let bad = || format!("invalid time {raw:?}");
    let mut parts = raw.trim().split(':');
    let (h, m, s) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(h), Some(m), Some(s), None) => (h, m, s),
        _ => return Err(bad()),
    };
    if m.len() != 2 || s.len() != 2 || h.is_empty() {
        return Err(bad());
    }
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    let s: u32 = s.parse().map_err(|_| bad())?;
    if m > 59 || s > 59 || h > 99 {
        return Err(bad());
    }
    Ok(h * 3600 + m * 60 + s)
}

fn parse_u32(raw: &str, column: &str) -> Result<u32, String> {
    raw.parse().map_err(|_| format!("invalid {column} {raw:?}"))
}

fn parse_coordinates(lat: &str, lon: &str) -> Result<(f64, f64), String> {
    let lat: f64 = lat
        .parse()
        .map_err(|_| format!("invalid latitude {lat:?}"))?;
    let lon: f64 = lon
        .parse()
        .map_err(|_| format!("invalid longitude {lon:?}"))?;
    if !(-90.0..=90.0).contains(&lat) || !lat.is_finite() {
        return Err(format!("latitude {lat} out of range"));
    }
    if !(-180.0..=180.0).contains(&lon) || !lon.is_finite() {
        return Err(format!("longitude {lon} out of range"));
    }
    Ok((lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn times_past_midnight_are_kept_raw() {
        assert_eq!(parse_gtfs_time("07:00:30"), Ok(25_230));
        assert_eq!(parse_gtfs_time("7:00:30"), Ok(25_230));
        assert_eq!(parse_gtfs_time("25:10:00"), Ok(90_600));
        assert!(parse_gtfs_time("12:60:00").is_err());
        assert!(parse_gtfs_time("12:00").is_err());
    }

    #[test]
    fn dates_use_compact_gtfs_form() {
        assert_eq!(
            parse_gtfs_date("20240901"),
            Ok(NaiveDate::from_ymd_opt(2024, 9, 1).unwrap())
        );
        assert!(parse_gtfs_date("2024-09-01").is_err());
    }

    #[test]
    fn coordinates_outside_wgs84_are_rejected() {
        assert!(parse_coordinates("91", "0").is_err());
        assert!(parse_coordinates("0", "-180.5").is_err());
        assert_eq!(parse_coordinates("44.5", "11.3"), Ok((44.5, 11.3)));
    }
}
