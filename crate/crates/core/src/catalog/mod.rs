//! Machine-readable description of the transit database and the tagged
//! prompt built from it.

mod prompt;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use regex::Regex;
use rusqlite::Connection;
use serde::Serialize;

pub use prompt::{
    render_prompt, render_prompt_within, PromptDocument, PromptExemplar, DEFAULT_TASK,
};

/// Annotations shipped with the crate for the built-in schema.
pub const DEFAULT_ANNOTATIONS: &str = include_str!("../../data/annotations.txt");

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Database(#[from] rusqlite::Error),
    #[error(transparent)]
    Db(#[from] crate::db::DbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Table,
    View,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    /// Declared type as written in the DDL; empty for untyped view columns.
    pub decl_type: String,
}

impl ColumnInfo {
    pub fn affinity(&self) -> Affinity {
        Affinity::of(&self.decl_type)
    }
}

/// SQLite-style type affinity, enough to spot literal/column mismatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Affinity {
    Integer,
    Real,
    Text,
    Unknown,
}

impl Affinity {
    pub fn of(decl: &str) -> Self {
        let d = decl.to_ascii_uppercase();
        if d.contains("INT") {
            Affinity::Integer
        } else if d.contains("CHAR") || d.contains("CLOB") || d.contains("TEXT") {
            Affinity::Text
        } else if d.contains("REAL") || d.contains("FLOA") || d.contains("DOUB") {
            Affinity::Real
        } else {
            Affinity::Unknown
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Affinity::Integer | Affinity::Real)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableDescriptor {
    pub name: String,
    pub kind: RelationKind,
    pub description: String,
    pub ddl: String,
    pub columns: Vec<ColumnInfo>,
    /// One entry per column, in column order.
    pub column_comments: Vec<(String, String)>,
}

impl TableDescriptor {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        self.columns
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ForeignKeyDescriptor {
    pub child_table: String,
    pub child_columns: Vec<String>,
    pub parent_table: String,
    pub parent_columns: Vec<String>,
}

impl ForeignKeyDescriptor {
    pub fn constraint_name(&self) -> String {
        format!(
            "{}_{}_{}_fk",
            self.child_table,
            self.child_columns.join("_"),
            self.parent_table
        )
    }

    pub fn to_ddl(&self) -> String {
        format!(
            "ALTER TABLE {} ADD CONSTRAINT {} FOREIGN KEY ({}) REFERENCES {}({});",
            self.child_table,
            self.constraint_name(),
            self.child_columns.join(", "),
            self.parent_table,
            self.parent_columns.join(", ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogWarning {
    MissingAnnotation {
        table: String,
        column: Option<String>,
    },
    UnknownAnnotation {
        key: String,
    },
}

impl fmt::Display for CatalogWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogWarning::MissingAnnotation {
                table,
                column: Some(c),
            } => write!(f, "no comment for column {table}.{c}"),
            CatalogWarning::MissingAnnotation {
                table,
                column: None,
            } => write!(f, "no description for table {table}"),
            CatalogWarning::UnknownAnnotation { key } => {
                write!(f, "annotation {key} matches nothing in the database")
            }
        }
    }
}

/// Sidecar annotations: `table: description` and `table.column: comment`
/// lines; `#` starts a comment line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations {
    pub tables: BTreeMap<String, String>,
    pub columns: BTreeMap<(String, String), String>,
}

impl Annotations {
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut out = Annotations::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, comment) = line
                .split_once(':')
                .ok_or_else(|| CatalogError::Annotation {
                    line: i + 1,
                    message: "expected `key: comment`".into(),
                })?;
            let (key, comment) = (key.trim().to_ascii_lowercase(), comment.trim().to_owned());
            if key.is_empty() || comment.is_empty() {
                return Err(CatalogError::Annotation {
                    line: i + 1,
                    message: "empty key or comment".into(),
                });
            }
            let duplicate = match key.split_once('.') {
                Some((t, c)) => out
                    .columns
                    .insert((t.to_owned(), c.to_owned()), comment)
                    .is_some(),
                None => out.tables.insert(key.clone(), comment).is_some(),
            };
            if duplicate {
                return Err(CatalogError::Annotation {
                    line: i + 1,
                    message: format!("duplicate annotation for {key}"),
                });
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_ANNOTATIONS).expect("built-in annotations are well-formed")
    }
}

const UNDOCUMENTED: &str = "undocumented";

/// Tables, views and foreign keys of a database with their annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Catalog {
    pub tables: Vec<TableDescriptor>,
    pub foreign_keys: Vec<ForeignKeyDescriptor>,
}

impl Catalog {
    pub fn table(&self, name: &str) -> Option<&TableDescriptor> {
        self.tables
            .iter()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// DDL that recreates the schema (tables before views).
    pub fn schema_sql(&self) -> String {
        let mut ordered: Vec<&TableDescriptor> = self
            .tables
            .iter()
            .filter(|t| t.kind == RelationKind::Table)
            .collect();
        ordered.extend(self.tables.iter().filter(|t| t.kind == RelationKind::View));
        ordered
            .iter()
            .map(|t| format!("{};\n", t.ddl.trim_end_matches(';')))
            .collect()
    }
}

/// Introspects every user table and view and merges the annotations.
pub fn describe_database(
    conn: &Connection,
    annotations: &Annotations,
) -> Result<(Catalog, Vec<CatalogWarning>), CatalogError> {
    let mut warnings = Vec::new();
    let mut stmt = conn.prepare(
        "SELECT type, name, sql FROM sqlite_master
         WHERE type IN ('table', 'view') AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
    )?;
    let relations: Vec<(String, String, String)> = stmt
        .query_map([], |r| {
            Ok((
                r.get(0)?,
                r.get(1)?,
                r.get::<_, Option<String>>(2)?.unwrap_or_default(),
            ))
        })?
        .collect::<Result<_, _>>()?;

    let mut catalog = Catalog::default();
    let mut seen_columns = BTreeSet::new();
    for (kind, name, ddl) in relations {
        let kind = if kind == "view" {
            RelationKind::View
        } else {
            RelationKind::Table
        };
        let columns = table_columns(conn, &name)?;
        let lname = name.to_ascii_lowercase();
        let description = annotations.tables.get(&lname).cloned().unwrap_or_else(|| {
            warnings.push(CatalogWarning::MissingAnnotation {
                table: name.clone(),
                column: None,
            });
            UNDOCUMENTED.to_owned()
        });
        let column_comments = columns
            .iter()
            .map(|c| {
                let key = (lname.clone(), c.name.to_ascii_lowercase());
                seen_columns.insert(key.clone());
                let comment = annotations.columns.get(&key).cloned().unwrap_or_else(|| {
                    warnings.push(CatalogWarning::MissingAnnotation {
                        table: name.clone(),
                        column: Some(c.name.clone()),
                    });
                    UNDOCUMENTED.to_owned()
                });
                (c.name.clone(), comment)
            })
            .collect();
        if kind == RelationKind::Table {
            catalog.foreign_keys.extend(foreign_keys(conn, &name)?);
        }
        catalog.tables.push(TableDescriptor {
            name,
            kind,
            description,
            ddl: ddl.trim().to_owned(),
            columns,
            column_comments,
        });
    }

    for table in annotations.tables.keys() {
        if catalog.table(table).is_none() {
            warnings.push(CatalogWarning::UnknownAnnotation { key: table.clone() });
        }
    }
    for (table, column) in annotations.columns.keys() {
        if !seen_columns.contains(&(table.clone(), column.clone())) {
            warnings.push(CatalogWarning::UnknownAnnotation {
                key: format!("{table}.{column}"),
            });
        }
    }
    for w in &warnings {
        tracing::warn!(warning = %w, "catalog annotation");
    }
    Ok((catalog, warnings))
}

fn table_columns(conn: &Connection, table: &str) -> Result<Vec<ColumnInfo>, CatalogError> {
    let mut stmt = conn.prepare("SELECT name, type FROM pragma_table_info(?1) ORDER BY cid")?;
    let cols = stmt
        .query_map([table], |r| {
            Ok(ColumnInfo {
                name: r.get(0)?,
                decl_type: r.get(1)?,
            })
        })?
        .collect::<Result<_, _>>()?;
    Ok(cols)
}

fn foreign_keys(conn: &Connection, table: &str) -> Result<Vec<ForeignKeyDescriptor>, CatalogError> {
    let mut stmt = conn.prepare(
        r#"SELECT id, "table", "from", "to" FROM pragma_foreign_key_list(?1) ORDER BY id, seq"#,
    )?;
    let rows: Vec<(i64, String, String, Option<String>)> = stmt
        .query_map([table], |r| {
            Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?))
        })?
        .collect::<Result<_, _>>()?;
    let mut grouped: BTreeMap<i64, ForeignKeyDescriptor> = BTreeMap::new();
    for (id, parent, from, to) in rows {
        let fk = grouped.entry(id).or_insert_with(|| ForeignKeyDescriptor {
            child_table: table.to_owned(),
            child_columns: Vec::new(),
            parent_table: parent.clone(),
            parent_columns: Vec::new(),
        });
        fk.parent_columns.push(to.unwrap_or_else(|| from.clone()));
        fk.child_columns.push(from);
    }
    // pragma_foreign_key_list numbers constraints in reverse declaration order
    Ok(grouped.into_values().rev().collect())
}

/// A prompt rule whose application to a query is reported back to the user
/// as an assumption.
#[derive(Debug, Clone)]
pub struct InterpretationRule {
    pub rule: String,
    pub applies_when: Regex,
    pub assumption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleSet {
    pub rules: Vec<String>,
}

/// The three general rules every prompt starts with.
pub const BASELINE_RULES: [&str; 3] = [
    "Query only relevant columns.",
    "If a query returns nothing, report the empty result.",
    "Always double check your query.",
];

impl RuleSet {
    pub fn baseline() -> Self {
        let mut rules: Vec<String> = BASELINE_RULES.iter().map(|r| r.to_string()).collect();
        rules.extend(interpretation_rules().into_iter().map(|r| r.rule));
        rules.extend(
            [
                "Declare every table alias in the FROM clause before using it.",
                "Compare columns only with literals of the same type.",
                "Times in stop_times are seconds since midnight and can exceed 86400 for trips after midnight.",
                "To draw the map of a route, select agency_id and route_id from route_geometry for that route.",
                "Answer with a single SQL SELECT statement and nothing else.",
            ]
            .map(String::from),
        );
        Self { rules }
    }
}

impl Default for RuleSet {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Interpretation rules with detectors over generated SQL.
pub fn interpretation_rules() -> Vec<InterpretationRule> {
    vec![
        InterpretationRule {
            rule: "If the question gives no date range, consider only services that are active on the current date.".into(),
            applies_when: Regex::new(r"(?i)(date\s*\(\s*'now'|current_date)").unwrap(),
            assumption: "Only services active on the current date were considered.".into(),
        },
        InterpretationRule {
            rule: "The direction column of trips holds the strings 'andata' (outbound) and 'ritorno' (inbound), never numbers.".into(),
            applies_when: Regex::new(r"(?i)'(andata|ritorno)'").unwrap(),
            assumption: "Directions are read as 'andata' = outbound and 'ritorno' = inbound.".into(),
        },
        InterpretationRule {
            rule: "When asked about working days, use the monday to friday flags of the calendar table.".into(),
            applies_when: Regex::new(r"(?i)\bmonday\b.*\bfriday\b").unwrap(),
            assumption: "Working days were taken as Monday to Friday.".into(),
        },
        InterpretationRule {
            rule: "When asked for an average number of trips, average the daily trip counts over the days the services run.".into(),
            applies_when: Regex::new(r"(?i)\bavg\s*\(").unwrap(),
            assumption: "Averages were computed over the days on which the services run.".into(),
        },
    ]
}

/// Assumption notes for the interpretation rules a query triggered.
pub fn applied_assumptions(sql: &str) -> Vec<String> {
    interpretation_rules()
        .into_iter()
        .filter(|r| r.applies_when.is_match(sql))
        .map(|r| r.assumption)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_table_db() -> Connection {
        let conn = Connection::open_in_memory().unwrap();
        conn.execute_batch(
            "CREATE TABLE agency (agency_id TEXT PRIMARY KEY, agency_name TEXT);
             CREATE TABLE routes (agency_id TEXT REFERENCES agency(agency_id), route_id TEXT, n INTEGER,
                                  PRIMARY KEY (agency_id, route_id));",
        )
        .unwrap();
        conn
    }

    #[test]
    fn one_descriptor_per_table() {
        let ann = Annotations::parse(
            "agency: agencies\nagency.agency_id: id\nagency.agency_name: name\n",
        )
        .unwrap();
        let (catalog, warnings) = describe_database(&two_table_db(), &ann).unwrap();
        assert_eq!(catalog.tables.len(), 2);
        assert_eq!(
            catalog.tables[0].column_comments[0],
            ("agency_id".to_string(), "id".to_string())
        );
        assert_eq!(catalog.foreign_keys.len(), 1);
        assert_eq!(
            catalog.foreign_keys[0].to_ddl(),
            "ALTER TABLE routes ADD CONSTRAINT routes_agency_id_agency_fk FOREIGN KEY (agency_id) REFERENCES agency(agency_id);"
        );
        // routes is entirely unannotated: table + 3 columns
        assert_eq!(warnings.len(), 4);
        assert!(warnings.iter().all(
            |w| matches!(w, CatalogWarning::MissingAnnotation { table, .. } if table == "routes")
        ));
    }

    #[test]
    fn annotation_for_missing_column_is_reported() {
        let ann = Annotations::parse("agency.colour: nope\n").unwrap();
        let (_, warnings) = describe_database(&two_table_db(), &ann).unwrap();
        assert!(warnings.contains(&CatalogWarning::UnknownAnnotation {
            key: "agency.colour".into()
        }));
    }

    #[test]
    fn annotation_syntax_errors_carry_line() {
        let err = Annotations::parse("# header\nagency description without colon\n").unwrap_err();
        assert!(matches!(err, CatalogError::Annotation { line: 2, .. }));
        assert!(Annotations::parse("a: x\na: y\n").is_err());
    }

    #[test]
    fn baseline_rules_lead_the_rule_set() {
        let rules = RuleSet::baseline();
        assert_eq!(&rules.rules[..3], &BASELINE_RULES.map(String::from));
        assert!(rules
            .rules
            .iter()
            .any(|r| r.contains("active on the current date")));
    }

    #[test]
    fn assumptions_follow_the_query() {
        let sql = "select count(*) from trips t join calendar c using (agency_id, service_id) \
                   where date('now') between c.start_date and c.end_date and t.direction = 'andata'";
        let notes = applied_assumptions(sql);
        assert_eq!(notes.len(), 2);
        assert!(applied_assumptions("select 1").is_empty());
    }

    #[test]
    fn affinity_matches_declared_types() {
        assert_eq!(Affinity::of("INTEGER"), Affinity::Integer);
        assert_eq!(Affinity::of("TEXT"), Affinity::Text);
        assert_eq!(Affinity::of("REAL"), Affinity::Real);
        assert_eq!(Affinity::of(""), Affinity::Unknown);
    }
}
