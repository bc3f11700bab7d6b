use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::ingest::Direction;
use crate::provider::{CompletionProvider, CompletionRequest, Message, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    T1,
    T2,
    T3,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::T1, TemplateId::T2, TemplateId::T3];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::T1 => "T1",
            TemplateId::T2 => "T2",
            TemplateId::T3 => "T3",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    EntityList,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuestionTemplate {
    pub id: TemplateId,
    pub text_pattern: &'static str,
    pub answer_kind: AnswerKind,
}

pub const TEMPLATES: [QuestionTemplate; 3] = [
    QuestionTemplate {
        id: TemplateId::T1,
        text_pattern: "Which routes serve the municipality of {municipality}?",
        answer_kind: AnswerKind::EntityList,
    },
    QuestionTemplate {
        id: TemplateId::T2,
        text_pattern: "Which municipalities are served by route {route}?",
        answer_kind: AnswerKind::EntityList,
    },
    QuestionTemplate {
        id: TemplateId::T3,
        text_pattern:
            "What is the average number of trips that belong to route {route} and use stop {stop}?",
        answer_kind: AnswerKind::Scalar,
    },
];

pub fn template(id: TemplateId) -> &'static QuestionTemplate {
    &TEMPLATES[id as usize]
}

/// Fills `{name}` placeholders.
pub fn render_pattern(pattern: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = pattern.to_owned();
    for (k, v) in bindings {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Day {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Day {
    pub const ALL: [Day; 7] = [
        Day::Monday,
        Day::Tuesday,
        Day::Wednesday,
        Day::Thursday,
        Day::Friday,
        Day::Saturday,
        Day::Sunday,
    ];

    /// Calendar column holding the day flag.
    pub fn column(self) -> &'static str {
        match self {
            Day::Monday => "monday",
            Day::Tuesday => "tuesday",
            Day::Wednesday => "wednesday",
            Day::Thursday => "thursday",
            Day::Friday => "friday",
            Day::Saturday => "saturday",
            Day::Sunday => "sunday",
        }
    }

    fn plural(self) -> &'static str {
        match self {
            Day::Monday => "Mondays",
            Day::Tuesday => "Tuesdays",
            Day::Wednesday => "Wednesdays",
            Day::Thursday => "Thursdays",
            Day::Friday => "Fridays",
            Day::Saturday => "Saturdays",
            Day::Sunday => "Sundays",
        }
    }
}

/// Extra condition appended to a template question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rider {
    HourRange { from_hour: u32, to_hour: u32 },
    DateRange { from: NaiveDate, to: NaiveDate },
    WeekdaySet { days: Vec<Day> },
    Direction { direction: Direction },
}

impl Rider {
    pub fn kind(&self) -> &'static str {
        match self {
            Rider::HourRange { .. } => "hour_range",
            Rider::DateRange { .. } => "date_range",
            Rider::WeekdaySet { .. } => "weekday_set",
            Rider::Direction { .. } => "direction",
        }
    }

    pub fn clause(&self) -> String {
        match self {
            Rider::HourRange { from_hour, to_hour } => {
                format!("between {from_hour}:00 and {to_hour}:00")
            }
            Rider::DateRange { from, to } => format!("between {from} and {to}"),
            Rider::WeekdaySet { days } => {
                let working = &Day::ALL[..5];
                if days.as_slice() == working {
                    "on working days".to_owned()
                } else {
                    let names: Vec<&str> = days.iter().map(|d| d.plural()).collect();
                    match names.as_slice() {
                        [one] => format!("on {one}"),
                        [init @ .., last] => format!("on {} and {last}", init.join(", ")),
                        [] => String::new(),
                    }
                }
            }
            Rider::Direction {
                direction: Direction::Outbound,
            } => "in the outbound direction".to_owned(),
            Rider::Direction {
                direction: Direction::Inbound,
            } => "in the inbound direction".to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub id: String,
    pub template_id: TemplateId,
    pub text: String,
    pub bindings: BTreeMap<String, String>,
    pub riders: Vec<Rider>,
    pub injected_invalid: bool,
    pub paraphrase_seed: u64,
}

impl GeneratedQuestion {
    pub fn answer_kind(&self) -> AnswerKind {
        template(self.template_id).answer_kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParaphraseMode {
    #[default]
    Off,
    Provider,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpandConfig {
    pub seed: u64,
    pub counts: BTreeMap<TemplateId, usize>,
    /// Chance of appending each rider kind, drawn independently.
    pub rider_probability: f64,
    /// Chance that a T3 question pairs a route with a stop it never uses.
    pub invalid_probability: f64,
    pub paraphrase: ParaphraseMode,
}

impl Default for ExpandConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            counts: [
                (TemplateId::T1, 15),
                (TemplateId::T2, 15),
                (TemplateId::T3, 12),
            ]
            .into_iter()
            .collect(),
            rider_probability: 0.25,
            invalid_probability: 0.25,
            paraphrase: ParaphraseMode::Off,
        }
    }
}

/// Values the templates can be bound to.
#[derive(Debug, Clone, Default)]
pub struct BindingPool {
    pub municipalities: Vec<String>,
    pub routes: Vec<String>,
    pub stops: Vec<String>,
    /// (route short name, stop name) pairs joined by at least one trip.
    pub linked: BTreeSet<(String, String)>,
    pub service_window: Option<(NaiveDate, NaiveDate)>,
}

fn strings(conn: &Connection, sql: &str) -> rusqlite::Result<Vec<String>> {
    let mut stmt = conn.prepare(sql)?;
    let rows = stmt.query_map([], |r| r.get(0))?;
    rows.collect()
}

impl BindingPool {
    pub fn load(conn: &Connection) -> Result<Self, EvalError> {
        let municipalities = strings(
            conn,
            "SELECT DISTINCT m.name FROM municipalities m JOIN stops s ON s.municipality_code = m.code ORDER BY m.name",
        )?;
        let routes = strings(
            conn,
            "SELECT DISTINCT route_short_name FROM routes ORDER BY route_short_name",
        )?;
        let stops = strings(
            conn,
            "SELECT DISTINCT stop_name FROM stops ORDER BY stop_name",
        )?;
        let mut stmt = conn.prepare(
            "SELECT DISTINCT r.route_short_name, s.stop_name
             FROM routes r
             JOIN trips t ON t.agency_id = r.agency_id AND t.route_id = r.route_id
             JOIN stop_times st ON st.agency_id = t.agency_id AND st.trip_id = t.trip_id
             JOIN stops s ON s.agency_id = st.agency_id AND s.stop_id = st.stop_id",
        )?;
        let linked = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<rusqlite::Result<BTreeSet<(String, String)>>>()?;
        let window: (Option<String>, Option<String>) = conn.query_row(
            "SELECT min(start_date), max(end_date) FROM calendar",
            [],
            |r| Ok((r.get(0)?, r.get(1)?)),
        )?;
        let service_window = match window {
            (Some(a), Some(b)) => match (
                NaiveDate::parse_from_str(&a, "%Y-%m-%d"),
                NaiveDate::parse_from_str(&b, "%Y-%m-%d"),
            ) {
                (Ok(a), Ok(b)) => Some((a, b)),
                _ => None,
            },
            _ => None,
        };
        Ok(Self {
            municipalities,
            routes,
            stops,
            linked,
            service_window,
        })
    }

    fn unlinked_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for r in &self.routes {
            for s in &self.stops {
                if !self.linked.contains(&(r.clone(), s.clone())) {
                    out.push((r.clone(), s.clone()));
                }
            }
        }
        out
    }
}

/// Cycles through a shuffled copy of the candidates so bindings repeat only
/// once every candidate was used.
struct Sampler<T> {
    items: Vec<T>,
    next: usize,
}

impl<T: Clone> Sampler<T> {
    fn new(mut items: Vec<T>, rng: &mut ChaCha8Rng) -> Self {
        items.shuffle(rng);
        Self { items, next: 0 }
    }

    fn draw(&mut self) -> Option<T> {
        if self.items.is_empty() {
            return None;
        }
        let item = self.items[self.next % self.items.len()].clone();
        self.next += 1;
        Some(item)
    }
}

fn draw_riders(rng: &mut ChaCha8Rng, p: f64, window: Option<(NaiveDate, NaiveDate)>) -> Vec<Rider> {
    let mut riders = Vec::new();
    if rng.random_bool(p) {
        let from_hour = rng.random_range(5..=20);
        riders.push(Rider::HourRange {
            from_hour,
            to_hour: from_hour + rng.random_range(1..=3),
        });
    }
    if rng.random_bool(p) {
        if let Some((start, end)) = window {
            let span = (end - start).num_days().max(0);
            let a = rng.random_range(0..=span);
            let b = rng.random_range(a..=span);
            riders.push(Rider::DateRange {
                from: start + Duration::days(a),
                to: start + Duration::days(b),
            });
        }
    }
    if rng.random_bool(p) {
        let days = match rng.random_range(0..3) {
            0 => Day::ALL[..5].to_vec(),
            1 => vec![Day::Saturday, Day::Sunday],
            _ => vec![Day::ALL[rng.random_range(0..7)]],
        };
        riders.push(Rider::WeekdaySet { days });
    }
    if rng.random_bool(p) {
        let direction = if rng.random_bool(0.5) {
            Direction::Outbound
        } else {
            Direction::Inbound
        };
        riders.push(Rider::Direction { direction });
    }
    riders
}

/// Appends rider clauses before the final question mark.
pub fn question_text(
    template_id: TemplateId,
    bindings: &BTreeMap<String, String>,
    riders: &[Rider],
) -> String {
    let base = render_pattern(template(template_id).text_pattern, bindings);
    if riders.is_empty() {
        return base;
    }
    let clauses: Vec<String> = riders.iter().map(Rider::clause).collect();
    format!("{} {}?", base.trim_end_matches('?'), clauses.join(", "))
}

fn paraphrase(provider: &dyn CompletionProvider, text: &str) -> Option<String> {
    let request = CompletionRequest::new(
        Purpose::Paraphrase,
        "Rephrase the user's question about public transport as a different user might ask it. \
         Keep every name, number, date and condition. Reply with the question only.",
        vec![Message::user(text.to_owned())],
    );
    provider
        .complete(&request)
        .ok()
        .map(|t| t.trim().to_owned())
        .filter(|t| !t.is_empty())
}

/// Expands the templates with values from the database. With paraphrasing
/// off the output depends only on the database and `config.seed`.
pub fn expand_templates(
    conn: &Connection,
    config: &ExpandConfig,
    paraphraser: Option<&dyn CompletionProvider>,
) -> Result<Vec<GeneratedQuestion>, EvalError> {
    let pool = BindingPool::load(conn)?;
    expand_with_pool(&pool, config, paraphraser)
}

pub fn expand_with_pool(
    pool: &BindingPool,
    config: &ExpandConfig,
    paraphraser: Option<&dyn CompletionProvider>,
) -> Result<Vec<GeneratedQuestion>, EvalError> {
    let count = |t| config.counts.get(&t).copied().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut municipalities = Sampler::new(pool.municipalities.clone(), &mut rng);
    let mut routes = Sampler::new(pool.routes.clone(), &mut rng);
    let mut linked = Sampler::new(pool.linked.iter().cloned().collect(), &mut rng);
    let mut unlinked = Sampler::new(pool.unlinked_pairs(), &mut rng);
    let missing =
        |what: &str| EvalError::InsufficientData(format!("the database has no {what} to bind"));

    let mut out = Vec::new();
    for t in TemplateId::ALL {
        for i in 0..count(t) {
            let mut bindings = BTreeMap::new();
            let mut injected_invalid = false;
            match t {
                TemplateId::T1 => {
                    bindings.insert(
                        "municipality".into(),
                        municipalities
                            .draw()
                            .ok_or_else(|| missing("served municipality"))?,
                    );
                }
                TemplateId::T2 => {
                    bindings.insert(
                        "route".into(),
                        routes.draw().ok_or_else(|| missing("route"))?,
                    );
                }
                TemplateId::T3 => {
                    let want_invalid = rng.random_bool(config.invalid_probability);
                    let pair = match (want_invalid, unlinked.draw()) {
                        (true, Some(pair)) => {
                            injected_invalid = true;
                            pair
                        }
                        _ => linked.draw().ok_or_else(|| missing("route/stop pair"))?,
                    };
                    bindings.insert("route".into(), pair.0);
                    bindings.insert("stop".into(), pair.1);
                }
            }
            let riders = draw_riders(&mut rng, config.rider_probability, pool.service_window);
            let paraphrase_seed: u64 = rng.random();
            let mut text = question_text(t, &bindings, &riders);
            if let (ParaphraseMode::Provider, Some(p)) = (config.paraphrase, paraphraser) {
                if let Some(alt) = paraphrase(p, &text) {
                    text = alt;
                }
            }
            out.push(GeneratedQuestion {
                id: format!("{t}-{:02}", i + 1),
                template_id: t,
                text,
                bindings,
                riders,
                injected_invalid,
                paraphrase_seed,
            });
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// Conditions each rider adds to the trip-level part of a gold query.
fn trip_conditions(riders: &[Rider], weekdays: bool) -> Vec<String> {
    let mut out = Vec::new();
    for r in riders {
        match r {
            Rider::DateRange { from, to } => {
                out.push(format!("c.start_date <= '{to}' and c.end_date >= '{from}'"));
            }
            Rider::WeekdaySet { days } if weekdays => {
                let flags: Vec<String> = days
                    .iter()
                    .map(|d| format!("c.{} = 1", d.column()))
                    .collect();
                out.push(format!("({})", flags.join(" or ")));
            }
            Rider::Direction { direction } => {
                out.push(format!("t.direction = '{}'", direction.as_str()))
            }
            Rider::WeekdaySet { .. } | Rider::HourRange { .. } => {}
        }
    }
    out
}

fn hour_condition(riders: &[Rider]) -> Option<String> {
    riders.iter().find_map(|r| match r {
        Rider::HourRange { from_hour, to_hour } => Some(format!(
            "st.departure_time >= {} and st.departure_time < {}",
            from_hour * 3600,
            to_hour * 3600
        )),
        _ => None,
    })
}

/// Reference query for a generated question, written from its bindings and
/// riders.
pub fn gold_sql(q: &GeneratedQuestion) -> String {
    let b = |k: &str| quote(q.bindings.get(k).map(String::as_str).unwrap_or_default());
    // T3 averages over the selected days instead of filtering on them.
    let mut conds = trip_conditions(&q.riders, q.template_id != TemplateId::T3);
    match q.template_id {
        TemplateId::T1 | TemplateId::T2 => {
            conds.extend(hour_condition(&q.riders));
            let (select, filter) = match q.template_id {
                TemplateId::T1 => (
                    "r.route_short_name",
                    format!("m.name = {}", b("municipality")),
                ),
                _ => ("m.name", format!("r.route_short_name = {}", b("route"))),
            };
            conds.insert(0, filter);
            format!(
                "select distinct {select}\n\
                 from routes r\n\
                 join trips t on t.agency_id = r.agency_id and t.route_id = r.route_id\n\
                 join calendar c on c.agency_id = t.agency_id and c.service_id = t.service_id\n\
                 join stop_times st on st.agency_id = t.agency_id and st.trip_id = t.trip_id\n\
                 join stops s on s.agency_id = st.agency_id and s.stop_id = st.stop_id\n\
                 join municipalities m on m.code = s.municipality_code\n\
                 where {}",
                conds.join("\n  and ")
            )
        }
        TemplateId::T3 => {
            let days: Vec<Day> = q
                .riders
                .iter()
                .find_map(|r| match r {
                    Rider::WeekdaySet { days } => Some(days.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| Day::ALL.to_vec());
            let flags: Vec<String> = days.iter().map(|d| format!("c.{}", d.column())).collect();
            let mut inner = vec![
                "st.agency_id = t.agency_id".to_owned(),
                "st.trip_id = t.trip_id".to_owned(),
                format!("s.stop_name = {}", b("stop")),
            ];
            inner.extend(hour_condition(&q.riders));
            conds.insert(0, format!("r.route_short_name = {}", b("route")));
            format!(
                "select coalesce(sum({}), 0) / {}.0 as avg_trips\n\
                 from trips t\n\
                 join routes r on r.agency_id = t.agency_id and r.route_id = t.route_id\n\
                 join calendar c on c.agency_id = t.agency_id and c.service_id = t.service_id\n\
                 where {}\n\
                 \x20 and exists (\n\
                 \x20   select 1 from stop_times st\n\
                 \x20   join stops s on s.agency_id = st.agency_id and s.stop_id = st.stop_id\n\
                 \x20   where {}\n\
                 \x20 )",
                flags.join(" + "),
                days.len(),
                conds.join("\n  and "),
                inner.join(" and ")
            )
        }
    }
}
