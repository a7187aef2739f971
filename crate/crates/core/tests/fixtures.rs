mod common;

use std::fs;
use std::path::PathBuf;

use coesql_core::corpus::{database_path, load_corpus, Corpus};
use coesql_core::edit::ChainStyle;
use coesql_core::eval::{evaluate, execution_match, parse_predictions};
use coesql_core::extract::ExtractionConfig;
use coesql_core::pipeline::{
    run, PipelineError, Provider, RunConfig, RunPaths, PREDICTIONS_FILE, TRANSCRIPT_FILE,
};
use coesql_core::prompt::{
    build_exemplar, build_prompt, serialize_schema, Annotations, PromptConfig, TestContext,
};

fn fixture(name: &str) -> PathBuf {
    common::fixtures().join(name)
}

fn train() -> Corpus {
    load_corpus(&fixture("train.json"), &fixture("tables.json")).unwrap()
}

fn dev() -> Corpus {
    load_corpus(&fixture("dev.json"), &fixture("tables.json")).unwrap()
}

fn small_run() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.prompt.k_d = 2;
    cfg.prompt.k_e = 2;
    cfg.workers = 2;
    cfg
}

fn paths(out: &std::path::Path) -> RunPaths {
    RunPaths {
        train: fixture("train.json"),
        test: fixture("dev.json"),
        tables: fixture("tables.json"),
        db_dir: Some(fixture("database")),
        annotations: Some(fixture("annotations.jsonl")),
        out_dir: out.to_path_buf(),
    }
}

fn party_prompt(style: ChainStyle) -> String {
    let corpus = train();
    let it = &corpus.interactions[0];
    let catalog = corpus.catalog(&it.db_id).unwrap();
    let schema = serialize_schema(
        catalog,
        Some(&database_path(&fixture("database"), &it.db_id)),
    );
    assert!(schema.warnings.is_empty(), "{:?}", schema.warnings);
    let annotations = Annotations::load(&fixture("annotations.jsonl")).unwrap();
    let exemplar = build_exemplar(
        it,
        schema.text.clone(),
        &ExtractionConfig::sparc(),
        &annotations,
    );
    let config = PromptConfig {
        style,
        ..PromptConfig::default()
    };
    let test = TestContext {
        db_id: it.db_id.clone(),
        schema_text: schema.text,
        questions: vec!["How many hosts are there?".into()],
    };
    build_prompt(&[exemplar], &test, &[], &config)
        .unwrap()
        .exemplar_transcript()
}

#[test]
fn golden_prompts_for_every_style() {
    for style in ChainStyle::ALL {
        let want = fs::read_to_string(fixture(&format!("golden/{}.txt", style.name()))).unwrap();
        let got = party_prompt(style);
        assert_eq!(got, want, "style {style}");
    }
}

#[test]
fn golden_prompts_are_stable_across_calls() {
    assert_eq!(
        party_prompt(ChainStyle::Code),
        party_prompt(ChainStyle::Code)
    );
}

#[test]
fn fixture_corpora_load_completely() {
    let t = train();
    assert_eq!(t.interactions.len(), 16);
    assert!(t.skipped.is_empty() && t.unparsed.is_empty());
    let d = dev();
    assert_eq!((d.interactions.len(), d.question_count()), (4, 13));
    assert!(d.interactions.iter().all(|i| i.fully_parsed()));
}

#[test]
fn fixture_gold_queries_execute() {
    let d = dev();
    for it in &d.interactions {
        let db = database_path(&fixture("database"), &it.db_id);
        for t in &it.turns {
            assert!(
                execution_match(&t.query, &t.query, &db).unwrap(),
                "{}",
                t.query
            );
        }
    }
    let employee = database_path(&fixture("database"), "employee_hire_evaluation");
    assert!(execution_match(
        "SELECT City FROM employee WHERE age < 30",
        "SELECT DISTINCT city FROM employee WHERE age < 30",
        &employee
    )
    .unwrap());
}

#[test]
fn oracle_run_scores_full_marks() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&paths(dir.path()), &Provider::Oracle, &small_run()).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    assert_eq!(summary.turns, 13);
    assert_eq!(summary.exemplars, 4);
    let text = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
    let report = evaluate(
        &parse_predictions(&text),
        &dev(),
        Some(&fixture("database")),
    );
    assert_eq!((report.em.qm, report.em.im), (100.0, 100.0));
    let ex = report.ex.unwrap();
    assert_eq!((ex.qm, ex.im), (100.0, 100.0));
    assert_eq!(report.by_turn[4].count, 1);
    assert!(dir.path().join("prompts/00000.txt").exists());
}

#[test]
fn oracle_run_with_chain_post_processing() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_run();
    cfg.prompt.style = ChainStyle::Code;
    cfg.prompt.post_process = coesql_core::prompt::Component::Code;
    let summary = run(&paths(dir.path()), &Provider::Oracle, &cfg).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    let text = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
    let report = evaluate(&parse_predictions(&text), &dev(), None);
    assert_eq!(report.em.qm, 100.0);
}

#[test]
fn replay_reproduces_predictions_without_the_model() {
    let first = tempfile::tempdir().unwrap();
    run(&paths(first.path()), &Provider::Oracle, &small_run()).unwrap();
    let transcript = first.path().join(TRANSCRIPT_FILE);
    let second = tempfile::tempdir().unwrap();
    let summary = run(
        &paths(second.path()),
        &Provider::Replay {
            transcript: transcript.clone(),
        },
        &small_run(),
    )
    .unwrap();
    assert!(summary.failures.is_empty());
    assert_eq!(
        fs::read(first.path().join(PREDICTIONS_FILE)).unwrap(),
        fs::read(second.path().join(PREDICTIONS_FILE)).unwrap()
    );
}

#[test]
fn rerun_resumes_from_its_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&paths(dir.path()), &Provider::Oracle, &small_run()).unwrap();
    assert_eq!((first.requests, first.replayed), (13, 0));
    let again = run(&paths(dir.path()), &Provider::Oracle, &small_run()).unwrap();
    assert_eq!((again.requests, again.replayed), (0, 13));
    let lines = fs::read_to_string(dir.path().join(TRANSCRIPT_FILE))
        .unwrap()
        .lines()
        .count();
    assert_eq!(lines, 13);
}

#[test]
fn missing_credentials_fail_setup() {
    let dir = tempfile::tempdir().unwrap();
    let provider = Provider::OpenAi {
        base_url: "http://127.0.0.1:9".into(),
        key_var: "COESQL_TEST_KEY_THAT_IS_NOT_SET".into(),
    };
    let err = run(&paths(dir.path()), &provider, &small_run()).unwrap_err();
    assert!(matches!(err, PipelineError::Provider(_)), "{err}");
}

#[test]
fn default_exemplar_counts_fit_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run(&paths(dir.path()), &Provider::Oracle, &RunConfig::default()).unwrap();
    assert_eq!(summary.exemplars, 16);
    assert!(summary.failures.is_empty());
}
