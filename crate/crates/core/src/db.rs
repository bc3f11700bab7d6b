//! Access to the transit database: typed result tables and a bounded pool of
//! read-only connections with per-query deadlines.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DbError {
    #[error("cannot open database {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: rusqlite::Error,
    },
    #[error("query failed: {0}")]
    Query(String),
    #[error("query exceeded its {0:?} deadline")]
    Timeout(Duration),
}

impl From<rusqlite::Error> for DbError {
    fn from(err: rusqlite::Error) -> Self {
        DbError::Query(err.to_string())
    }
}

/// A single value in a result row.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Integer(v) => Some(*v as f64),
            Cell::Real(v) => Some(*v),
            Cell::Text(s) => s.trim().parse().ok(),
            Cell::Null => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    /// Canonical form used for equality and hashing: integral reals compare
    /// equal to integers and `-0.0` equals `0.0`.
    fn canonical(&self) -> CanonicalCell<'_> {
        match self {
            Cell::Null => CanonicalCell::Null,
            Cell::Integer(v) => CanonicalCell::Int(*v),
            Cell::Real(v) => {
                if v.fract() == 0.0 && v.abs() < 9.0e15 {
                    CanonicalCell::Int(*v as i64)
                } else if v.is_nan() {
                    CanonicalCell::Real(f64::NAN.to_bits())
                } else {
                    CanonicalCell::Real(v.to_bits())
                }
            }
            Cell::Text(s) => CanonicalCell::Text(s),
        }
    }
}

#[derive(PartialEq, Eq, Hash)]
enum CanonicalCell<'a> {
    Null,
    Int(i64),
    Real(u64),
    Text(&'a str),
}

// NULLs are equal to each other so that result sets can be compared as sets.
impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

impl Eq for Cell {}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.canonical().hash(state)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Null => f.write_str("NULL"),
            Cell::Integer(v) => write!(f, "{v}"),
            Cell::Real(v) => write!(f, "{v}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<ValueRef<'_>> for Cell {
    fn from(value: ValueRef<'_>) -> Self {
        match value {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(v) => Cell::Integer(v),
            ValueRef::Real(v) => Cell::Real(v),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Text(String::from_utf8_lossy(b).into_owned()),
        }
    }
}

/// A column-named result table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowSet {
    pub columns: Vec<String>,
    pub data: Vec<Vec<Cell>>,
}

impl RowSet {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.eq_ignore_ascii_case(name))
    }

    /// The single value of a one-row, one-column result.
    pub fn scalar(&self) -> Option<&Cell> {
        match (self.columns.len(), self.data.as_slice()) {
            (1, [row]) => row.first(),
            _ => None,
        }
    }

    /// Every row has exactly one cell per column.
    pub fn is_rectangular(&self) -> bool {
        self.data.iter().all(|row| row.len() == self.columns.len())
    }
}

/// Location of a built transit database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseHandle {
    path: PathBuf,
}

impl DatabaseHandle {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn open_read_only(&self) -> Result<Connection, DbError> {
        open_read_only(&self.path)
    }
}

pub fn open_read_only(path: &Path) -> Result<Connection, DbError> {
    let flags = OpenFlags::SQLITE_OPEN_READ_ONLY
        | OpenFlags::SQLITE_OPEN_NO_MUTEX
        | OpenFlags::SQLITE_OPEN_URI;
    let conn = Connection::open_with_flags(path, flags).map_err(|source| DbError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    conn.pragma_update(None, "query_only", true)?;
    Ok(conn)
}

/// Runs `sql` on `conn`, interrupting it once `timeout` elapses.
pub fn query_rows(conn: &Connection, sql: &str, timeout: Duration) -> Result<RowSet, DbError> {
    let deadline = Instant::now() + timeout;
    conn.progress_handler(1_000, Some(move || Instant::now() > deadline));
    let result = run_query(conn, sql);
    conn.progress_handler(0, None::<fn() -> bool>);
    result.map_err(|err| match err {
        rusqlite::Error::SqliteFailure(e, _)
            if e.code == rusqlite::ErrorCode::OperationInterrupted =>
        {
            DbError::Timeout(timeout)
        }
        other => DbError::from(other),
    })
}

fn run_query(conn: &Connection, sql: &str) -> rusqlite::Result<RowSet> {
    let mut stmt = conn.prepare(sql)?;
    let columns: Vec<String> = stmt.column_names().into_iter().map(str::to_owned).collect();
    let width = columns.len();
    let mut rows = stmt.query([])?;
    let mut data = Vec::new();
    while let Some(row) = rows.next()? {
        let mut out = Vec::with_capacity(width);
        for i in 0..width {
            out.push(Cell::from(row.get_ref(i)?));
        }
        data.push(out);
    }
    Ok(RowSet { columns, data })
}

/// Fixed-size pool of read-only connections. Callers block until a
/// connection is free.
pub struct ReadPool {
    handle: DatabaseHandle,
    idle: Mutex<Vec<Connection>>,
    returned: Condvar,
    size: usize,
}

impl fmt::Debug for ReadPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReadPool")
            .field("path", &self.handle.path)
            .field("size", &self.size)
            .finish()
    }
}

impl ReadPool {
    pub fn open(handle: DatabaseHandle, size: usize) -> Result<Self, DbError> {
        let size = size.max(1);
        let conns = (0..size)
            .map(|_| handle.open_read_only())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            handle,
            idle: Mutex::new(conns),
            returned: Condvar::new(),
            size,
        })
    }

    pub fn handle(&self) -> &DatabaseHandle {
        &self.handle
    }

    pub fn get(&self) -> PooledConnection<'_> {
        let mut idle = self.idle.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(conn) = idle.pop() {
                return PooledConnection {
                    pool: self,
                    conn: Some(conn),
                };
            }
            idle = self.returned.wait(idle).unwrap_or_else(|e| e.into_inner());
        }
    }

    pub fn query(&self, sql: &str, timeout: Duration) -> Result<RowSet, DbError> {
        let conn = self.get();
        query_rows(&conn, sql, timeout)
    }
}

pub struct PooledConnection<'a> {
    pool: &'a ReadPool,
    conn: Option<Connection>,
}

impl std::ops::Deref for PooledConnection<'_> {
    type Target = Connection;

    fn deref(&self) -> &Connection {
        self.conn.as_ref().expect("connection present until drop")
    }
}

impl Drop for PooledConnection<'_> {
    fn drop(&mut self) {
        if let Some(conn) = self.conn.take() {
            let mut idle = self.pool.idle.lock().unwrap_or_else(|e| e.into_inner());
            idle.push(conn);
            self.pool.returned.notify_one();
        }
    }
}
