use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const PHONE_JOIN: &str = "FROM phone AS T1 JOIN phone_market AS T2 JOIN market AS T3 ON T1.Phone_ID = T2.Phone_ID AND T2.Market_ID = T3.Market_ID";

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn coesql(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coesql"))
        .args(args)
        .env_remove("COESQL_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn f(name: &str) -> String {
    fixtures().join(name).display().to_string()
}

fn schema_args(db: &str) -> Vec<String> {
    vec![
        "--tables".into(),
        f("tables.json"),
        "--db-id".into(),
        db.into(),
    ]
}

fn turn(n: usize) -> String {
    match n {
        1 => format!("SELECT T1.Name {PHONE_JOIN} WHERE T3.District = \"Alberta\""),
        2 => format!("SELECT T1.Name, T3.District {PHONE_JOIN} WHERE T3.District = \"Alberta\""),
        _ => format!("SELECT T1.Name, T3.District {PHONE_JOIN}"),
    }
}

#[test]
fn extract_prints_one_delete_line() {
    let (old, new) = (turn(2), turn(3));
    let mut args = vec!["extract", "--old", &old, "--new", &new];
    let schema = schema_args("phone_market");
    args.extend(schema.iter().map(String::as_str));
    let out = coesql(&args);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let edits: Vec<&str> = text.lines().filter(|l| l.starts_with("- Edit")).collect();
    assert_eq!(
        edits,
        ["- EditWhereCondition(market.District = \"Alberta\", -)"]
    );
}

#[test]
fn extract_adds_the_district_column() {
    let (old, new) = (turn(1), turn(2));
    let mut args = vec![
        "extract",
        "--old",
        &old,
        "--new",
        &new,
        "--style",
        "natural-language",
        "--omit-no-change",
    ];
    let schema = schema_args("phone_market");
    args.extend(schema.iter().map(String::as_str));
    let out = coesql(&args);
    assert_eq!(stdout(&out), "SELECT clause:\n- add market.District\n");
}

#[test]
fn extract_identical_queries() {
    let out = coesql(&[
        "extract",
        "--old",
        "SELECT * FROM party",
        "--new",
        "select * from PARTY",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "no edition\n");
}

#[test]
fn extract_exit_codes() {
    let bad = coesql(&[
        "extract",
        "--old",
        "SELECT 1 FROM",
        "--new",
        "SELECT * FROM t",
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let restricted = coesql(&[
        "extract",
        "--old",
        "SELECT a FROM t",
        "--new",
        "SELECT a FROM t LIMIT 1",
        "--rules",
        "select,where",
    ]);
    assert_eq!(restricted.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&restricted.stderr).contains("EditLimit"));
}

#[test]
fn apply_round_trips_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.txt");
    fs::write(
        &chain,
        "WHERE clause:\n- EditWhereCondition(market.District = \"Alberta\", -)\n",
    )
    .unwrap();
    let base = turn(2);
    let chain_arg = chain.display().to_string();
    let mut args = vec!["apply", "--base", &base, "--chain", &chain_arg];
    let schema = schema_args("phone_market");
    args.extend(schema.iter().map(String::as_str));
    let out = coesql(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let printed = stdout(&out);
    assert!(!printed.contains("WHERE") && printed.contains("District"));

    fs::write(
        &chain,
        "WHERE clause:\n- EditWhereCondition(market.District = \"Ontario\", -)\n",
    )
    .unwrap();
    let missing = coesql(&args);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("edit 0"));
}

fn run_args(out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "run".into(),
        "--train".into(),
        f("train.json"),
        "--test".into(),
        f("dev.json"),
        "--tables".into(),
        f("tables.json"),
        "--db-dir".into(),
        f("database"),
        "--annotations".into(),
        f("annotations.jsonl"),
        "--out".into(),
        out.display().to_string(),
        "--k-d".into(),
        "2".into(),
        "--k-e".into(),
        "2".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(out: &Path, extra: &[&str]) -> Output {
    let args = run_args(out, extra);
    coesql(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn oracle_run_then_evaluate_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = dir.path().join("report.json");
    let predictions = dir.path().join("predictions.sql").display().to_string();
    let report_arg = report.display().to_string();
    let eval = coesql(&[
        "evaluate",
        "--predictions",
        &predictions,
        "--corpus",
        &f("dev.json"),
        "--tables",
        &f("tables.json"),
        "--db-dir",
        &f("database"),
        "--report",
        &report_arg,
    ]);
    assert_eq!(eval.status.code(), Some(0));
    assert!(stdout(&eval).contains("Turn >4"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    for metric in ["em", "ex"] {
        assert_eq!(json[metric]["qm"], 100.0);
        assert_eq!(json[metric]["im"], 100.0);
    }
}

#[test]
fn replay_runs_are_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    assert!(run(first.path(), &[]).status.success());
    let transcript = first.path().join("transcript.jsonl").display().to_string();
    let second = tempfile::tempdir().unwrap();
    let third = tempfile::tempdir().unwrap();
    for dir in [&second, &third] {
        let out = run(
            dir.path(),
            &["--provider", "replay", "--transcript", &transcript],
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let read = |d: &tempfile::TempDir| fs::read(d.path().join("predictions.sql")).unwrap();
    assert_eq!(read(&second), read(&third));
    assert_eq!(read(&first), read(&second));
}

#[test]
fn live_provider_without_key_is_a_setup_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &[
            "--provider",
            "openai",
            "--key-var",
            "COESQL_CLI_TEST_UNSET_KEY",
            "--base-url",
            "http://127.0.0.1:9",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("COESQL_CLI_TEST_UNSET_KEY"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "workers = 1\n[prompt]\nstyle = \"code\"\nk_d = 9\n").unwrap();
    let out_dir = dir.path().join("out");
    let cfg_arg = cfg.display().to_string();
    let out = run(&out_dir, &["--config", &cfg_arg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["prompt"]["style"], "code");
    assert_eq!(manifest["config"]["prompt"]["k_d"], 2);
    assert_eq!(manifest["config"]["workers"], 1);
    assert!(manifest["finished_ms"].is_u64());
}

#[test]
fn coverage_table_has_a_column_per_group() {
    let out = coesql(&[
        "coverage",
        "--corpus",
        &f("train.json"),
        "--tables",
        &f("tables.json"),
        "--l-c-max",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    assert!(header.contains("S+W") && header.contains("F+S+W") && header.contains("all"));
    let unbounded = text.lines().find(|l| l.starts_with("none")).unwrap();
    assert!(unbounded.trim_end().ends_with("100.0"), "{unbounded}");
}
