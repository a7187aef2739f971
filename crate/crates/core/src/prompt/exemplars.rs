//! Seeded exemplar selection and the analysis annotation file.

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{serialize_schema, Exemplar, ExemplarTurn, PromptError};
use crate::corpus::{database_path, Corpus, Interaction};
use crate::edit::EditChain;
use crate::extract::{select_source, ExtractionConfig};

/// One line of the annotation file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub db_id: String,
    pub interaction_id: usize,
    /// 1-based.
    pub turn: usize,
    pub analysis: String,
}

/// Question-difference analyses keyed by (database, interaction, turn).
#[derive(Clone, Debug, Default)]
pub struct Annotations {
    map: HashMap<(String, usize, usize), String>,
}

impl Annotations {
    pub fn from_records(records: impl IntoIterator<Item = AnnotationRecord>) -> Self {
        Annotations {
            map: records
                .into_iter()
                .map(|r| ((r.db_id, r.interaction_id, r.turn), r.analysis))
                .collect(),
        }
    }

    /// Reads a line-delimited JSON file; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let file = std::fs::File::open(path)
            .map_err(|e| PromptError::Annotations(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| PromptError::Annotations(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| {
                PromptError::Annotations(format!("{}:{}: {e}", path.display(), i + 1))
            })?;
            records.push(rec);
        }
        Ok(Self::from_records(records))
    }

    pub fn get(&self, db_id: &str, interaction_id: usize, turn: usize) -> Option<&str> {
        self.map
            .get(&(db_id.to_string(), interaction_id, turn))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Turns an interaction with parsed gold queries into an exemplar, choosing
/// each turn's source by [`select_source`].
pub fn build_exemplar(
    interaction: &Interaction,
    schema_text: String,
    extraction: &ExtractionConfig,
    annotations: &Annotations,
) -> Exemplar {
    let golds: Vec<_> = interaction
        .turns
        .iter()
        .map(|t| {
            t.gold
                .clone()
                .expect("exemplar interactions are fully parsed")
        })
        .collect();
    let turns = interaction
        .turns
        .iter()
        .enumerate()
        .map(|(j, t)| ExemplarTurn {
            question: t.utterance.clone(),
            gold: golds[j].clone(),
            chain: if j == 0 {
                EditChain::direct()
            } else {
                select_source(&golds[..j], &golds[j], extraction)
            },
            analysis: (j > 0)
                .then(|| {
                    annotations
                        .get(&interaction.db_id, interaction.id, j + 1)
                        .map(str::to_string)
                })
                .flatten(),
        })
        .collect();
    Exemplar {
        db_id: interaction.db_id.clone(),
        interaction_id: interaction.id,
        schema_text,
        turns,
    }
}

/// Picks `k_d` databases and `k_e` interactions from each, uniformly under
/// `seed`. Only interactions whose gold queries all parse are eligible.
pub fn select_exemplars(
    train: &Corpus,
    k_d: usize,
    k_e: usize,
    seed: u64,
    extraction: &ExtractionConfig,
    annotations: &Annotations,
    db_dir: Option<&Path>,
) -> Result<Vec<Exemplar>, PromptError> {
    let mut eligible: Vec<(&str, Vec<&Interaction>)> = train
        .by_database()
        .into_iter()
        .map(|(db, its)| {
            (
                db,
                its.into_iter()
                    .filter(|i| i.fully_parsed())
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let deficient = eligible
        .iter()
        .find(|(_, its)| its.len() < k_e)
        .map(|(db, its)| (db.to_string(), its.len()));
    eligible.retain(|(_, its)| its.len() >= k_e);
    if eligible.len() < k_d {
        return Err(PromptError::InsufficientCorpus(match deficient {
            Some((db, n)) => format!(
                "need {k_d} databases with {k_e} usable interactions, found {}; `{db}` has only {n}",
                eligible.len()
            ),
            None => format!("need {k_d} databases, corpus has {}", eligible.len()),
        }));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dbs: Vec<&(&str, Vec<&Interaction>)> = eligible.choose_multiple(&mut rng, k_d).collect();
    let mut out = Vec::with_capacity(k_d * k_e);
    for (db, its) in dbs {
        let catalog = train
            .catalog(db)
            .expect("loaded interactions have catalogs");
        let schema =
            serialize_schema(catalog, db_dir.map(|d| database_path(d, db)).as_deref()).text;
        for it in its.choose_multiple(&mut rng, k_e) {
            out.push(build_exemplar(it, schema.clone(), extraction, annotations));
        }
    }
    Ok(out)
}
