//! Multi-turn corpora in the SParC/CoSQL interaction-file layout.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::SqlAst;
use crate::parser::{parse_with, ParseOptions};
use crate::schema::{load_tables_json, SchemaCatalog, SchemaError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed interaction file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("record {index} of {path}: {message}")]
    Record {
        path: PathBuf,
        index: usize,
        message: String,
    },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub utterance: String,
    pub query: String,
    /// `None` when the gold query falls outside the supported grammar.
    #[serde(skip)]
    pub gold: Option<SqlAst>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    /// Position of the record in its source file.
    pub id: usize,
    pub db_id: String,
    pub turns: Vec<Turn>,
}

impl Interaction {
    pub fn fully_parsed(&self) -> bool {
        self.turns.iter().all(|t| t.gold.is_some())
    }
}

/// A record left out of the corpus, or a gold query kept unparsed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadIssue {
    pub record: usize,
    pub turn: Option<usize>,
    pub message: String,
}

#[derive(Clone, Debug, Default)]
pub struct Corpus {
    pub interactions: Vec<Interaction>,
    pub catalogs: HashMap<String, SchemaCatalog>,
    /// Records dropped entirely (unknown database, no turns).
    pub skipped: Vec<LoadIssue>,
    /// Gold queries that did not parse; their turns stay in the corpus.
    pub unparsed: Vec<LoadIssue>,
}

#[derive(Deserialize)]
struct RawTurn {
    utterance: String,
    query: String,
}

#[derive(Deserialize)]
struct RawInteraction {
    #[serde(alias = "db_id")]
    database_id: String,
    interaction: Vec<RawTurn>,
}

impl Corpus {
    pub fn question_count(&self) -> usize {
        self.interactions.iter().map(|i| i.turns.len()).sum()
    }

    pub fn catalog(&self, db_id: &str) -> Option<&SchemaCatalog> {
        self.catalogs.get(db_id)
    }

    /// Interactions grouped by database, in database-id order.
    pub fn by_database(&self) -> BTreeMap<&str, Vec<&Interaction>> {
        let mut out: BTreeMap<&str, Vec<&Interaction>> = BTreeMap::new();
        for it in &self.interactions {
            out.entry(it.db_id.as_str()).or_default().push(it);
        }
        out
    }

    /// Gold trees per interaction, `None` for unparsed turns.
    pub fn gold_trees(&self) -> Vec<Vec<Option<SqlAst>>> {
        self.interactions
            .iter()
            .map(|i| i.turns.iter().map(|t| t.gold.clone()).collect())
            .collect()
    }
}

/// Parses a gold or predicted query against its database, resolving names
/// through the catalog and tolerating columns it cannot place.
pub fn parse_for_db(
    sql: &str,
    catalog: &SchemaCatalog,
) -> Result<SqlAst, crate::parser::ParseError> {
    parse_with(
        sql,
        ParseOptions {
            catalog: Some(catalog),
            lenient: true,
            normalize: true,
        },
    )
}

/// Builds a corpus from interaction-file text and already loaded catalogs.
pub fn parse_corpus(
    text: &str,
    source: &Path,
    catalogs: HashMap<String, SchemaCatalog>,
) -> Result<Corpus, CorpusError> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| CorpusError::Format {
            path: source.to_path_buf(),
            message: e.to_string(),
        })?;
    let mut corpus = Corpus {
        catalogs,
        ..Corpus::default()
    };
    for (index, value) in values.into_iter().enumerate() {
        let raw: RawInteraction =
            serde_json::from_value(value).map_err(|e| CorpusError::Record {
                path: source.to_path_buf(),
                index,
                message: e.to_string(),
            })?;
        let Some(catalog) = corpus.catalogs.get(&raw.database_id) else {
            tracing::warn!(record = index, db = %raw.database_id, "unknown database, record skipped");
            corpus.skipped.push(LoadIssue {
                record: index,
                turn: None,
                message: format!("unknown database `{}`", raw.database_id),
            });
            continue;
        };
        if raw.interaction.is_empty() {
            corpus.skipped.push(LoadIssue {
                record: index,
                turn: None,
                message: "interaction has no turns".into(),
            });
            continue;
        }
        let mut turns = Vec::with_capacity(raw.interaction.len());
        for (t, rt) in raw.interaction.into_iter().enumerate() {
            let gold = match parse_for_db(&rt.query, catalog) {
                Ok(ast) => Some(ast),
                Err(e) => {
                    corpus.unparsed.push(LoadIssue {
                        record: index,
                        turn: Some(t + 1),
                        message: e.to_string(),
                    });
                    None
                }
            };
            turns.push(Turn {
                utterance: rt.utterance,
                query: rt.query,
                gold,
            });
        }
        corpus.interactions.push(Interaction {
            id: index,
            db_id: raw.database_id,
            turns,
        });
    }
    if !corpus.unparsed.is_empty() {
        tracing::warn!(
            count = corpus.unparsed.len(),
            "gold queries outside the supported grammar"
        );
    }
    Ok(corpus)
}

/// Loads an interaction file together with its table-description file.
pub fn load_corpus(interactions_path: &Path, tables_path: &Path) -> Result<Corpus, CorpusError> {
    let catalogs = load_tables_json(tables_path)?;
    let text = std::fs::read_to_string(interactions_path).map_err(|e| CorpusError::Io {
        path: interactions_path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_corpus(&text, interactions_path, catalogs)
}

/// Spider-family database location: `<dir>/<db_id>/<db_id>.sqlite`.
pub fn database_path(db_dir: &Path, db_id: &str) -> PathBuf {
    db_dir.join(db_id).join(format!("{db_id}.sqlite"))
}
