//! `create table` blocks with example rows, as placed in front of questions.

use std::fmt::Write as _;
use std::path::Path;

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};

use crate::schema::{SchemaCatalog, Table};

/// Rows shown per table.
pub const EXAMPLE_ROWS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaText {
    pub text: String,
    /// One entry per table whose rows could not be read.
    pub warnings: Vec<String>,
}

fn cell(v: ValueRef<'_>) -> String {
    match v {
        ValueRef::Null => "NULL".into(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) if f.is_finite() && f.fract() == 0.0 => format!("{f:.1}"),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t)
            .chars()
            .map(|c| {
                if c == '\t' || c == '\n' || c == '\r' {
                    ' '
                } else {
                    c
                }
            })
            .collect(),
        ValueRef::Blob(b) => format!("<blob {} bytes>", b.len()),
    }
}

fn example_rows(conn: &Connection, table: &Table) -> rusqlite::Result<Vec<Vec<String>>> {
    let sql = format!(
        "SELECT * FROM \"{}\" LIMIT {EXAMPLE_ROWS}",
        table.name.as_str().replace('"', "\"\"")
    );
    let mut stmt = conn.prepare(&sql)?;
    let width = stmt.column_count();
    let rows = stmt.query_map([], |row| {
        (0..width).map(|i| row.get_ref(i).map(cell)).collect()
    })?;
    rows.collect()
}

fn create_block(out: &mut String, catalog: &SchemaCatalog, table: &Table) {
    let mut lines: Vec<String> = table
        .columns
        .iter()
        .map(|c| format!("\t{} {}", c.name, c.ty.name()))
        .collect();
    let pk: Vec<&str> = catalog
        .primary_keys_of(table.name.as_str())
        .map(|k| k.column.as_str())
        .collect();
    if !pk.is_empty() {
        lines.push(format!("\tprimary key ({})", pk.join(", ")));
    }
    for (from, to) in catalog.foreign_keys_of(table.name.as_str()) {
        lines.push(format!(
            "\tforeign key ({}) references {}({})",
            from.column,
            to.table.as_ref().map(|t| t.as_str()).unwrap_or_default(),
            to.column
        ));
    }
    let _ = writeln!(out, "create table {} (", table.name);
    let _ = writeln!(out, "{}", lines.join(",\n"));
    out.push(')');
}

/// Serializes every table of `catalog`, reading up to three rows per table in
/// storage order from the database file when one is given.
pub fn serialize_schema(catalog: &SchemaCatalog, db: Option<&Path>) -> SchemaText {
    let mut warnings = Vec::new();
    let conn = match db {
        Some(path) => match Connection::open_with_flags(
            path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        ) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("database {} unavailable: {e}", path.display()));
                None
            }
        },
        None => {
            warnings.push(format!("no database file for `{}`", catalog.db_id));
            None
        }
    };
    let mut blocks = Vec::with_capacity(catalog.tables.len());
    for table in &catalog.tables {
        let mut out = String::new();
        create_block(&mut out, catalog, table);
        if let Some(conn) = &conn {
            match example_rows(conn, table) {
                Ok(rows) => {
                    let header: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
                    let _ = write!(
                        out,
                        "\n/*\n{} example rows from table {}:\n{}",
                        rows.len(),
                        table.name,
                        header.join("\t")
                    );
                    for row in rows {
                        let _ = write!(out, "\n{}", row.join("\t"));
                    }
                    out.push_str("\n**/");
                }
                Err(e) => warnings.push(format!("rows of `{}` unavailable: {e}", table.name)),
            }
        }
        blocks.push(out);
    }
    for w in &warnings {
        tracing::warn!("{w}");
    }
    SchemaText {
        text: blocks.join("\n"),
        warnings,
    }
}
