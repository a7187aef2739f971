//! Database schema catalogs, loaded from the corpus table-description file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{ColumnRef, Ident};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Number,
    Text,
    Time,
    Boolean,
    Others,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Number => "number",
            ColumnType::Text => "text",
            ColumnType::Time => "time",
            ColumnType::Boolean => "boolean",
            ColumnType::Others => "others",
        }
    }

    fn parse(s: &str) -> ColumnType {
        match s.to_ascii_lowercase().as_str() {
            "number" => ColumnType::Number,
            "text" => ColumnType::Text,
            "time" => ColumnType::Time,
            "boolean" => ColumnType::Boolean,
            _ => ColumnType::Others,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: Ident,
    pub ty: ColumnType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: Ident,
    pub columns: Vec<Column>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == *name)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),
    #[error("table `{0}` has no columns")]
    EmptyTable(String),
    #[error("key references unknown column `{0}`")]
    UnknownKeyColumn(String),
    #[error("column index {0} out of range")]
    BadColumnIndex(i64),
    #[error("table index {0} out of range")]
    BadTableIndex(i64),
    #[error("cannot read table file: {0}")]
    Io(String),
    #[error("malformed table file: {0}")]
    Format(String),
}

/// Tables, columns and keys of one database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub db_id: String,
    pub tables: Vec<Table>,
    pub primary_keys: Vec<ColumnRef>,
    pub foreign_keys: Vec<(ColumnRef, ColumnRef)>,
}

impl SchemaCatalog {
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<Table>,
        primary_keys: Vec<ColumnRef>,
        foreign_keys: Vec<(ColumnRef, ColumnRef)>,
    ) -> Result<Self, SchemaError> {
        let catalog = SchemaCatalog {
            db_id: db_id.into(),
            tables,
            primary_keys,
            foreign_keys,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        for (i, t) in self.tables.iter().enumerate() {
            if self.tables[..i].iter().any(|o| o.name == t.name) {
                return Err(SchemaError::DuplicateTable(t.name.to_string()));
            }
            if t.columns.is_empty() {
                return Err(SchemaError::EmptyTable(t.name.to_string()));
            }
        }
        let keys = self
            .primary_keys
            .iter()
            .chain(self.foreign_keys.iter().flat_map(|(a, b)| [a, b]));
        for key in keys {
            if self.resolve(key).is_none() {
                return Err(SchemaError::UnknownKeyColumn(format!(
                    "{}.{}",
                    key.table.as_ref().map(Ident::as_str).unwrap_or("?"),
                    key.column
                )));
            }
        }
        Ok(())
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == *name)
    }

    /// Returns the catalog spelling of `column`, if it names a real column.
    pub fn resolve(&self, column: &ColumnRef) -> Option<ColumnRef> {
        let table = self.table(column.table.as_ref()?.as_str())?;
        let col = table.column(column.column.as_str())?;
        Some(ColumnRef {
            table: Some(table.name.clone()),
            column: col.name.clone(),
        })
    }

    /// Tables that contain a column called `name`.
    pub fn tables_with_column(&self, name: &str) -> Vec<&Table> {
        self.tables
            .iter()
            .filter(|t| t.column(name).is_some())
            .collect()
    }

    pub fn primary_keys_of<'a>(
        &'a self,
        table: &'a str,
    ) -> impl Iterator<Item = &'a ColumnRef> + 'a {
        self.primary_keys
            .iter()
            .filter(move |k| matches!(&k.table, Some(t) if *t == *table))
    }

    pub fn foreign_keys_of<'a>(
        &'a self,
        table: &'a str,
    ) -> impl Iterator<Item = &'a (ColumnRef, ColumnRef)> + 'a {
        self.foreign_keys
            .iter()
            .filter(move |(k, _)| matches!(&k.table, Some(t) if *t == *table))
    }
}

/// One record of the Spider-family `tables.json` file.
#[derive(Debug, Deserialize)]
struct RawTableRecord {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<serde_json::Value>,
    #[serde(default)]
    foreign_keys: Vec<(i64, i64)>,
}

impl RawTableRecord {
    fn into_catalog(self) -> Result<SchemaCatalog, SchemaError> {
        let mut tables: Vec<Table> = self
            .table_names_original
            .iter()
            .map(|n| Table {
                name: Ident::new(n.as_str()),
                columns: Vec::new(),
            })
            .collect();
        let mut refs: Vec<Option<ColumnRef>> = Vec::with_capacity(self.column_names_original.len());
        for (i, (table_idx, name)) in self.column_names_original.iter().enumerate() {
            if *table_idx < 0 {
                // the `*` pseudo-column
                refs.push(None);
                continue;
            }
            let table = tables
                .get_mut(*table_idx as usize)
                .ok_or(SchemaError::BadTableIndex(*table_idx))?;
            let ty = self
                .column_types
                .get(i)
                .map(|s| ColumnType::parse(s))
                .unwrap_or(ColumnType::Others);
            table.columns.push(Column {
                name: Ident::new(name.as_str()),
                ty,
            });
            refs.push(Some(ColumnRef {
                table: Some(table.name.clone()),
                column: Ident::new(name.as_str()),
            }));
        }
        let lookup = |idx: i64| -> Result<ColumnRef, SchemaError> {
            refs.get(usize::try_from(idx).map_err(|_| SchemaError::BadColumnIndex(idx))?)
                .cloned()
                .flatten()
                .ok_or(SchemaError::BadColumnIndex(idx))
        };
        let mut primary_keys = Vec::new();
        for pk in &self.primary_keys {
            // newer releases store composite keys as nested lists
            match pk {
                serde_json::Value::Number(n) => {
                    primary_keys.push(lookup(n.as_i64().unwrap_or(-1))?)
                }
                serde_json::Value::Array(items) => {
                    for item in items {
                        primary_keys.push(lookup(item.as_i64().unwrap_or(-1))?);
                    }
                }
                other => return Err(SchemaError::Format(format!("bad primary key {other}"))),
            }
        }
        let foreign_keys = self
            .foreign_keys
            .iter()
            .map(|(a, b)| Ok((lookup(*a)?, lookup(*b)?)))
            .collect::<Result<Vec<_>, SchemaError>>()?;
        SchemaCatalog::new(self.db_id, tables, primary_keys, foreign_keys)
    }
}

/// Parses a `tables.json` document into catalogs keyed by database id.
pub fn parse_tables_json(text: &str) -> Result<HashMap<String, SchemaCatalog>, SchemaError> {
    let records: Vec<RawTableRecord> =
        serde_json::from_str(text).map_err(|e| SchemaError::Format(e.to_string()))?;
    let mut out = HashMap::with_capacity(records.len());
    for rec in records {
        let catalog = rec.into_catalog()?;
        out.insert(catalog.db_id.clone(), catalog);
    }
    Ok(out)
}

pub fn load_tables_json(path: &Path) -> Result<HashMap<String, SchemaCatalog>, SchemaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SchemaError::Io(format!("{}: {e}", path.display())))?;
    parse_tables_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PARTY: &str = r#"[{
        "db_id": "party_host",
        "table_names_original": ["party", "host", "party_host"],
        "table_names": ["party", "host", "party host"],
        "column_names_original": [[-1, "*"], [0, "Party_ID"], [0, "Party_Theme"], [1, "Host_ID"], [1, "Name"], [2, "Party_ID"], [2, "Host_ID"]],
        "column_names": [[-1, "*"], [0, "party id"], [0, "party theme"], [1, "host id"], [1, "name"], [2, "party id"], [2, "host id"]],
        "column_types": ["text", "number", "text", "number", "text", "number", "number"],
        "primary_keys": [1, 3, 5],
        "foreign_keys": [[5, 1], [6, 3]]
    }]"#;

    #[test]
    fn loads_spider_table_records() {
        let cats = parse_tables_json(PARTY).unwrap();
        let c = &cats["party_host"];
        assert_eq!(c.tables.len(), 3);
        assert_eq!(c.tables[0].columns[1].ty, ColumnType::Text);
        assert_eq!(c.primary_keys.len(), 3);
        assert_eq!(
            c.foreign_keys[0],
            (
                ColumnRef::new("party_host", "Party_ID"),
                ColumnRef::new("party", "Party_ID")
            )
        );
        assert_eq!(
            c.resolve(&ColumnRef::new("PARTY", "party_theme")),
            Some(ColumnRef::new("party", "Party_Theme"))
        );
    }

    #[test]
    fn rejects_duplicate_tables_and_dangling_keys() {
        let t = |n: &str| Table {
            name: Ident::new(n),
            columns: vec![Column {
                name: Ident::new("id"),
                ty: ColumnType::Number,
            }],
        };
        assert_eq!(
            SchemaCatalog::new("d", vec![t("a"), t("A")], vec![], vec![]),
            Err(SchemaError::DuplicateTable("A".into()))
        );
        assert!(matches!(
            SchemaCatalog::new("d", vec![t("a")], vec![ColumnRef::new("b", "id")], vec![]),
            Err(SchemaError::UnknownKeyColumn(_))
        ));
        let empty = Table {
            name: Ident::new("e"),
            columns: vec![],
        };
        assert!(matches!(
            SchemaCatalog::new("d", vec![empty], vec![], vec![]),
            Err(SchemaError::EmptyTable(_))
        ));
    }
}
