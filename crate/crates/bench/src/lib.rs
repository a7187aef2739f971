//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use coesql_core::corpus::load_corpus;
use coesql_core::{Corpus, SqlAst};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

pub fn train() -> Corpus {
    let dir = fixtures();
    load_corpus(&dir.join("train.json"), &dir.join("tables.json")).expect("fixture train corpus")
}

pub fn dev() -> Corpus {
    let dir = fixtures();
    load_corpus(&dir.join("dev.json"), &dir.join("tables.json")).expect("fixture dev corpus")
}

/// Consecutive gold-query pairs of every interaction in the corpus.
pub fn turn_pairs(corpus: &Corpus) -> Vec<(SqlAst, SqlAst)> {
    corpus
        .interactions
        .iter()
        .flat_map(|it| {
            let trees: Vec<SqlAst> = it.turns.iter().filter_map(|t| t.gold.clone()).collect();
            trees
                .windows(2)
                .map(|w| (w[0].clone(), w[1].clone()))
                .collect::<Vec<_>>()
        })
        .collect()
}
