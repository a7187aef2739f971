//! Scoring predictions: exact match, execution match, question and
//! interaction accuracy with difficulty and turn-depth breakdowns.

mod exact;
mod exec;
mod hardness;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{database_path, parse_for_db, Corpus, Interaction};

pub use crate::corpus::load_corpus;
pub use exact::{canonical, exact_match};
pub use exec::{
    execution_match, same_results, Cell, ExecError, Executor, QueryError, STATEMENT_TIMEOUT,
};
pub use hardness::{difficulty, Difficulty};

/// Written in place of a prediction the pipeline could not produce.
pub const FAILED_PREDICTION: &str = "-- prediction failed";

pub const TURN_BUCKETS: [&str; 5] = ["1", "2", "3", "4", ">4"];

fn turn_bucket(turn: usize) -> &'static str {
    TURN_BUCKETS[turn.clamp(1, 5) - 1]
}

/// Writes one SQL per line, interactions separated by blank lines.
pub fn render_predictions(predictions: &[Vec<Option<String>>]) -> String {
    let mut out = String::new();
    for (i, turns) in predictions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for p in turns {
            let line = p
                .as_deref()
                .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| FAILED_PREDICTION.to_string());
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Inverse of [`render_predictions`]; failure markers read as `None`.
pub fn parse_predictions(text: &str) -> Vec<Vec<Option<String>>> {
    let mut out = Vec::new();
    let mut cur: Vec<Option<String>> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        cur.push((!line.starts_with("--")).then(|| line.to_string()));
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// QM and IM under one metric.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    /// Percent of scored questions answered correctly.
    pub qm: f64,
    /// Percent of interactions whose scored questions are all correct.
    pub im: f64,
    pub questions_scored: usize,
    pub questions_correct: usize,
    pub interactions_scored: usize,
    pub interactions_correct: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub count: usize,
    pub em_scored: usize,
    pub em_correct: usize,
    pub ex_scored: usize,
    pub ex_correct: usize,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl Bucket {
    fn new(label: &str) -> Self {
        Bucket {
            label: label.to_string(),
            ..Bucket::default()
        }
    }

    pub fn em_qm(&self) -> f64 {
        pct(self.em_correct, self.em_scored)
    }

    pub fn ex_qm(&self) -> f64 {
        pct(self.ex_correct, self.ex_scored)
    }

    fn add(&mut self, v: &Verdict) {
        self.count += 1;
        if let Some(ok) = v.em {
            self.em_scored += 1;
            self.em_correct += usize::from(ok);
        }
        if let Some(ok) = v.ex {
            self.ex_scored += 1;
            self.ex_correct += usize::from(ok);
        }
    }
}

/// Outcome for one question. `None` means the metric could not score it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub interaction_id: usize,
    pub db_id: String,
    pub turn: usize,
    pub difficulty: Option<Difficulty>,
    pub em: Option<bool>,
    pub ex: Option<bool>,
    pub predicted: Option<String>,
    pub gold: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: MetricScore,
    /// Absent when no database directory was given.
    pub ex: Option<MetricScore>,
    pub by_difficulty: Vec<Bucket>,
    pub by_turn: Vec<Bucket>,
    pub total_questions: usize,
    pub total_interactions: usize,
    /// Questions whose gold query did not parse (no difficulty, no EM).
    pub gold_unparsed: usize,
    /// Questions whose gold query failed to execute (no EX).
    pub gold_exec_failures: usize,
    pub verdicts: Vec<Verdict>,
}

fn score(interactions: &[Vec<&Verdict>], pick: impl Fn(&Verdict) -> Option<bool>) -> MetricScore {
    let mut s = MetricScore::default();
    for turns in interactions {
        let scored: Vec<bool> = turns.iter().filter_map(|v| pick(v)).collect();
        if scored.is_empty() {
            continue;
        }
        s.questions_scored += scored.len();
        s.questions_correct += scored.iter().filter(|b| **b).count();
        s.interactions_scored += 1;
        s.interactions_correct += usize::from(scored.iter().all(|b| *b));
    }
    s.qm = pct(s.questions_correct, s.questions_scored);
    s.im = pct(s.interactions_correct, s.interactions_scored);
    s
}

fn judge(
    it: &Interaction,
    preds: Option<&Vec<Option<String>>>,
    corpus: &Corpus,
    db_dir: Option<&Path>,
) -> Vec<Verdict> {
    let catalog = corpus.catalog(&it.db_id);
    let executor = db_dir.map(|d| Executor::open(&database_path(d, &it.db_id), STATEMENT_TIMEOUT));
    it.turns
        .iter()
        .enumerate()
        .map(|(j, turn)| {
            let predicted = preds.and_then(|p| p.get(j)).cloned().flatten();
            let pred_ast = predicted
                .as_deref()
                .zip(catalog)
                .and_then(|(sql, cat)| parse_for_db(sql, cat).ok());
            let mut note = None;
            let em = turn
                .gold
                .as_ref()
                .map(|gold| pred_ast.as_ref().is_some_and(|p| exact_match(p, gold)));
            let ex = match &executor {
                None => None,
                Some(Err(e)) => {
                    note = Some(e.to_string());
                    None
                }
                Some(Ok(ex)) => match ex.matches(predicted.as_deref().unwrap_or(""), &turn.query) {
                    Ok(ok) => Some(ok && predicted.is_some()),
                    Err(e) => {
                        note = Some(e.to_string());
                        None
                    }
                },
            };
            Verdict {
                interaction_id: it.id,
                db_id: it.db_id.clone(),
                turn: j + 1,
                difficulty: turn.gold.as_ref().map(difficulty),
                em,
                ex,
                predicted,
                gold: turn.query.clone(),
                note,
            }
        })
        .collect()
}

/// Scores `predictions` (aligned with `corpus.interactions`) under EM, and
/// under EX when `db_dir` is given. Missing predictions count as wrong.
pub fn evaluate(
    predictions: &[Vec<Option<String>>],
    corpus: &Corpus,
    db_dir: Option<&Path>,
) -> EvalReport {
    if predictions.len() != corpus.interactions.len() {
        tracing::warn!(
            predictions = predictions.len(),
            interactions = corpus.interactions.len(),
            "prediction file and corpus differ in interaction count"
        );
    }
    let per: Vec<Vec<Verdict>> = corpus
        .interactions
        .par_iter()
        .enumerate()
        .map(|(i, it)| judge(it, predictions.get(i), corpus, db_dir))
        .collect();
    let grouped: Vec<Vec<&Verdict>> = per.iter().map(|v| v.iter().collect()).collect();
    let em = score(&grouped, |v| v.em);
    let ex = db_dir.map(|_| score(&grouped, |v| v.ex));
    let mut by_difficulty: Vec<Bucket> = Difficulty::ALL
        .iter()
        .map(|d| Bucket::new(d.name()))
        .collect();
    let mut by_turn: Vec<Bucket> = TURN_BUCKETS.iter().map(|l| Bucket::new(l)).collect();
    let mut unclassified = Bucket::new("unparsed");
    let verdicts: Vec<Verdict> = per.into_iter().flatten().collect();
    for v in &verdicts {
        match v.difficulty {
            Some(d) => by_difficulty[d as usize].add(v),
            None => unclassified.add(v),
        }
        by_turn[TURN_BUCKETS
            .iter()
            .position(|l| *l == turn_bucket(v.turn))
            .expect("known bucket")]
        .add(v);
    }
    if unclassified.count > 0 {
        by_difficulty.push(unclassified);
    }
    EvalReport {
        em,
        ex,
        by_difficulty,
        by_turn,
        total_questions: verdicts.len(),
        total_interactions: corpus.interactions.len(),
        gold_unparsed: verdicts.iter().filter(|v| v.difficulty.is_none()).count(),
        gold_exec_failures: if db_dir.is_some() {
            verdicts.iter().filter(|v| v.ex.is_none()).count()
        } else {
            0
        },
        verdicts,
    }
}

impl EvalReport {
    /// Plain-text summary: overall QM/IM, then per-difficulty and per-turn
    /// QM with bucket sizes.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let ex = self.ex.as_ref();
        let cell = |m: Option<&MetricScore>, f: fn(&MetricScore) -> f64| {
            m.map(|m| format!("{:>8.1}", f(m)))
                .unwrap_or_else(|| format!("{:>8}", "-"))
        };
        let _ = writeln!(out, "{:<12}{:>8}{:>8}", "", "EM", "EX");
        let _ = writeln!(
            out,
            "{:<12}{}{}",
            "QM",
            cell(Some(&self.em), |m| m.qm),
            cell(ex, |m| m.qm)
        );
        let _ = writeln!(
            out,
            "{:<12}{}{}",
            "IM",
            cell(Some(&self.em), |m| m.im),
            cell(ex, |m| m.im)
        );
        let table =
            |out: &mut String, title: &str, buckets: &[Bucket], label: fn(&str) -> String| {
                let _ = write!(out, "\n{title:<12}");
                for b in buckets {
                    let _ = write!(out, "{:>10}", label(&b.label));
                }
                let _ = write!(out, "\n{:<12}", "count");
                for b in buckets {
                    let _ = write!(out, "{:>10}", b.count);
                }
                let _ = write!(out, "\n{:<12}", "QM (EM)");
                for b in buckets {
                    let _ = write!(out, "{:>10.1}", b.em_qm());
                }
                if ex.is_some() {
                    let _ = write!(out, "\n{:<12}", "QM (EX)");
                    for b in buckets {
                        let _ = write!(out, "{:>10.1}", b.ex_qm());
                    }
                }
                out.push('\n');
            };
        table(&mut out, "difficulty", &self.by_difficulty, |l| {
            l.to_string()
        });
        table(&mut out, "turn", &self.by_turn, |l| format!("Turn {l}"));
        let _ = writeln!(
            out,
            "\n{} questions in {} interactions; {} gold unparsed; {} gold not executable",
            self.total_questions,
            self.total_interactions,
            self.gold_unparsed,
            self.gold_exec_failures
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_tables_json;

    const TABLES: &str = r#"[{
        "db_id": "d",
        "table_names_original": ["employee"],
        "column_names_original": [[-1, "*"], [0, "id"], [0, "city"], [0, "age"]],
        "column_types": ["text", "number", "text", "number"],
        "primary_keys": [1],
        "foreign_keys": []
    }]"#;

    fn corpus() -> Corpus {
        let text = r#"[
            {"database_id": "d", "interaction": [{"utterance": "a", "query": "SELECT city FROM employee"}, {"utterance": "b", "query": "SELECT city FROM employee WHERE age < 30"}]},
            {"database_id": "d", "interaction": [{"utterance": "c", "query": "SELECT count(*) FROM employee"}, {"utterance": "d", "query": "SELECT max(age) FROM employee"}]}
        ]"#;
        crate::corpus::parse_corpus(
            text,
            Path::new("c.json"),
            parse_tables_json(TABLES).unwrap(),
        )
        .unwrap()
    }

    fn gold(c: &Corpus) -> Vec<Vec<Option<String>>> {
        c.interactions
            .iter()
            .map(|i| i.turns.iter().map(|t| Some(t.query.clone())).collect())
            .collect()
    }

    #[test]
    fn one_wrong_turn_of_four() {
        let c = corpus();
        let mut preds = gold(&c);
        preds[0][1] = Some("SELECT city FROM employee".into());
        let r = evaluate(&preds, &c, None);
        assert_eq!(r.em.qm, 75.0);
        assert_eq!(r.em.im, 50.0);
        assert_eq!(r.by_turn[0].count + r.by_turn[1].count, 4);
        assert_eq!(r.by_difficulty.iter().map(|b| b.count).sum::<usize>(), 4);
        assert!(r.ex.is_none());
        let all = evaluate(&gold(&c), &c, None);
        assert_eq!((all.em.qm, all.em.im), (100.0, 100.0));
    }

    #[test]
    fn missing_and_failed_predictions_are_wrong() {
        let c = corpus();
        let preds = vec![vec![
            None,
            Some("SELECT city FROM employee WHERE age < 30".into()),
        ]];
        let r = evaluate(&preds, &c, None);
        assert_eq!(r.em.questions_correct, 1);
        assert_eq!(r.em.questions_scored, 4);
    }

    #[test]
    fn prediction_file_round_trips() {
        let preds = vec![
            vec![Some("SELECT a\nFROM t".to_string()), None],
            vec![Some("SELECT b FROM t".to_string())],
        ];
        let text = render_predictions(&preds);
        assert_eq!(
            text,
            "SELECT a FROM t\n-- prediction failed\n\nSELECT b FROM t\n"
        );
        let back = parse_predictions(&text);
        assert_eq!(back[0][0].as_deref(), Some("SELECT a FROM t"));
        assert_eq!(back[0][1], None);
        assert_eq!(back.len(), 2);
    }

    #[test]
    fn table_lists_turn_columns() {
        let c = corpus();
        let t = evaluate(&gold(&c), &c, None).render_table();
        assert!(t.contains("Turn 1") && t.contains("Turn >4") && t.contains("QM (EM)"));
    }

    const QUERIES: [&str; 4] = [
        "SELECT city FROM employee",
        "SELECT city FROM employee WHERE age < 30",
        "SELECT count(*) FROM employee",
        "SELECT max(age) FROM employee",
    ];

    fn sized_corpus(lengths: &[usize]) -> Corpus {
        let records: Vec<String> = lengths
            .iter()
            .map(|&n| {
                let turns: Vec<String> = (0..n)
                    .map(|t| {
                        format!(
                            r#"{{"utterance": "q", "query": "{}"}}"#,
                            QUERIES[t % QUERIES.len()]
                        )
                    })
                    .collect();
                format!(
                    r#"{{"database_id": "d", "interaction": [{}]}}"#,
                    turns.join(",")
                )
            })
            .collect();
        crate::corpus::parse_corpus(
            &format!("[{}]", records.join(",")),
            Path::new("c.json"),
            parse_tables_json(TABLES).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn interaction_match_can_exceed_question_match_with_uneven_lengths() {
        let c = sized_corpus(&[4, 1]);
        let mut preds = gold(&c);
        preds[0][3] = Some("SELECT id FROM employee".into());
        let r = evaluate(&preds, &c, None);
        assert_eq!((r.em.qm, r.em.im), (80.0, 50.0));
        let mut preds = gold(&c);
        preds[1][0] = Some("SELECT id FROM employee".into());
        let r = evaluate(&preds, &c, None);
        assert!(r.em.im > 0.0 && r.em.qm > r.em.im);
        let c = sized_corpus(&[1, 1, 4]);
        let mut preds = gold(&c);
        for turn in &mut preds[2] {
            *turn = Some("SELECT id FROM employee".into());
        }
        let r = evaluate(&preds, &c, None);
        assert!(r.em.im > r.em.qm, "{} vs {}", r.em.im, r.em.qm);
    }

    proptest::proptest! {
        #[test]
        fn interaction_match_bounded_by_question_match_at_equal_length(
            len in 1usize..5,
            broken in proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, 4), 1..6),
        ) {
            let c = sized_corpus(&vec![len; broken.len()]);
            let mut preds = gold(&c);
            for (turns, flags) in preds.iter_mut().zip(&broken) {
                for (turn, &bad) in turns.iter_mut().zip(flags) {
                    if bad {
                        *turn = Some("SELECT id FROM employee".into());
                    }
                }
            }
            let r = evaluate(&preds, &c, None);
            proptest::prop_assert!(r.em.im <= r.em.qm + 1e-9);
        }
    }
}
