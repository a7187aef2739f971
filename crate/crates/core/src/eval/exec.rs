//! Execution match against a SQLite database.

use std::cmp::Ordering;
use std::path::Path;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use thiserror::Error;

pub const STATEMENT_TIMEOUT: Duration = Duration::from_secs(30);

static ORDER_BY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\border\s+by\b").expect("valid regex"));

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("statement exceeded {0:?}")]
    Timeout(Duration),
    #[error("{0}")]
    Sql(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ExecError {
    #[error("cannot open database {0}")]
    Database(String),
    #[error("gold query failed: {0}")]
    GoldFailed(QueryError),
}

/// A result value. Integers and reals compare by numeric value.
#[derive(Clone, Debug)]
pub enum Cell {
    Null,
    Num(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Num(_) => 1,
            Cell::Text(_) => 2,
            Cell::Blob(_) => 3,
        }
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cell::Num(a), Cell::Num(b)) => a.total_cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl From<ValueRef<'_>> for Cell {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Num(i as f64),
            ValueRef::Real(f) => Cell::Num(if f == 0.0 { 0.0 } else { f }),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(b.to_vec()),
        }
    }
}

/// A read-only connection that aborts statements after a deadline.
pub struct Executor {
    conn: Connection,
    timeout: Duration,
}

impl Executor {
    pub fn open(path: &Path, timeout: Duration) -> Result<Self, ExecError> {
        let conn = Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )
        .map_err(|e| ExecError::Database(format!("{}: {e}", path.display())))?;
        Ok(Executor { conn, timeout })
    }

    pub fn run(&self, sql: &str) -> Result<Vec<Vec<Cell>>, QueryError> {
        let deadline = Instant::now() + self.timeout;
        self.conn
            .progress_handler(1000, Some(move || Instant::now() > deadline))
            .map_err(|e| QueryError::Sql(e.to_string()))?;
        let result = (|| {
            let mut stmt = self.conn.prepare(sql)?;
            let width = stmt.column_count();
            let rows = stmt.query_map([], |row| {
                (0..width).map(|i| row.get_ref(i).map(Cell::from)).collect()
            })?;
            rows.collect::<rusqlite::Result<Vec<Vec<Cell>>>>()
        })();
        let _ = self.conn.progress_handler(0, None::<fn() -> bool>);
        result.map_err(|e| match e {
            rusqlite::Error::SqliteFailure(f, _)
                if f.code == rusqlite::ErrorCode::OperationInterrupted =>
            {
                QueryError::Timeout(self.timeout)
            }
            other => QueryError::Sql(other.to_string()),
        })
    }

    /// Compares result multisets; row order counts only when the gold query
    /// orders its output. A failing or timed-out prediction is a mismatch.
    pub fn matches(&self, pred_sql: &str, gold_sql: &str) -> Result<bool, ExecError> {
        let gold = self.run(gold_sql).map_err(ExecError::GoldFailed)?;
        let Ok(pred) = self.run(pred_sql) else {
            return Ok(false);
        };
        Ok(same_results(pred, gold, ORDER_BY.is_match(gold_sql)))
    }
}

pub fn same_results(mut pred: Vec<Vec<Cell>>, mut gold: Vec<Vec<Cell>>, ordered: bool) -> bool {
    if !ordered {
        pred.sort();
        gold.sort();
    }
    pred == gold
}

pub fn execution_match(pred_sql: &str, gold_sql: &str, db_path: &Path) -> Result<bool, ExecError> {
    Executor::open(db_path, STATEMENT_TIMEOUT)?.matches(pred_sql, gold_sql)
}
