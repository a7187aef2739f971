use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Read as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use coesql_core::corpus::load_corpus;
use coesql_core::eval::{evaluate as score, parse_predictions};
use coesql_core::extract::{coverage_stats, extract_chain, ExtractionConfig};
use coesql_core::pipeline::{self, Provider, RunConfig, RunPaths};
use coesql_core::prompt::parse_component_order;
use coesql_core::schema::load_tables_json;
use coesql_core::{
    apply_chain, parse_rendered_edits, parse_with, render_chain, unparse, ParseOptions, RuleTag,
};
use coesql_core::{SchemaCatalog, SqlAst};

use crate::{
    ApplyArgs, CoverageArgs, EvaluateArgs, ExtractArgs, ProviderKind, RunArgs, SchemaArgs,
};

/// A command failure and the exit status it maps to.
pub enum Failure {
    /// Unreadable or invalid input (status 1).
    Input(anyhow::Error),
    /// The method itself could not produce a result (status 2).
    Method(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Method(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Method(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

fn input(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Input(e.into())
}

fn load_catalog(args: &SchemaArgs) -> Result<Option<SchemaCatalog>, Failure> {
    let (Some(path), Some(db)) = (&args.tables, &args.db_id) else {
        return Ok(None);
    };
    let mut catalogs = load_tables_json(path).map_err(input)?;
    catalogs
        .remove(db)
        .map(Some)
        .ok_or_else(|| input(anyhow!("database `{db}` not in {}", path.display())))
}

fn parse_sql(sql: &str, catalog: Option<&SchemaCatalog>, what: &str) -> Result<SqlAst, Failure> {
    let opts = ParseOptions {
        catalog,
        lenient: true,
        normalize: true,
    };
    parse_with(sql, opts)
        .with_context(|| format!("cannot parse {what} query"))
        .map_err(input)
}

pub fn extract(args: ExtractArgs) -> Outcome {
    let catalog = load_catalog(&args.schema)?;
    let old = parse_sql(&args.old, catalog.as_ref(), "old")?;
    let new = parse_sql(&args.new, catalog.as_ref(), "new")?;
    let rules: BTreeSet<RuleTag> = if args.rules.is_empty() {
        RuleTag::ALL.into_iter().collect()
    } else {
        args.rules.iter().copied().collect()
    };
    let config = ExtractionConfig::new(args.l_c.unwrap_or(usize::MAX), rules).map_err(input)?;
    let chain = extract_chain(&old, &new, &config).map_err(|e| Failure::Method(e.into()))?;
    if chain.is_empty() {
        println!("no edition");
        return Ok(());
    }
    if chain.len() > config.max_chain_len {
        return Err(Failure::Method(anyhow!(
            "chain of {} edits exceeds the limit of {}",
            chain.len(),
            config.max_chain_len
        )));
    }
    println!("{}", render_chain(&chain, args.style, !args.omit_no_change));
    Ok(())
}

pub fn apply(args: ApplyArgs) -> Outcome {
    let catalog = load_catalog(&args.schema)?;
    let base = parse_sql(&args.base, catalog.as_ref(), "base")?;
    let text = if args.chain == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(input)?;
        s
    } else {
        std::fs::read_to_string(&args.chain)
            .with_context(|| format!("cannot read {}", args.chain.display()))
            .map_err(input)?
    };
    let chain = parse_rendered_edits(&text, args.style, catalog.as_ref()).map_err(input)?;
    let edited = apply_chain(&base, &chain).map_err(|e| Failure::Method(e.into()))?;
    println!("{}", unparse(&edited));
    Ok(())
}

fn run_config(args: &RunArgs, config_file: Option<&Path>) -> Result<RunConfig, Failure> {
    let mut cfg = match config_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .map_err(input)?;
            toml::from_str::<RunConfig>(&text)
                .with_context(|| format!("invalid config {}", path.display()))
                .map_err(input)?
        }
        None => RunConfig::default(),
    };
    let p = &mut cfg.prompt;
    if let Some(v) = args.style {
        p.style = v;
    }
    if let Some(v) = args.k_d {
        p.k_d = v;
    }
    if let Some(v) = args.k_e {
        p.k_e = v;
    }
    if let Some(v) = args.seed {
        p.seed = v;
    }
    if let Some(v) = args.post_process {
        p.post_process = v;
    }
    if let Some(v) = &args.component_order {
        p.component_order = parse_component_order(v).map_err(|e| input(anyhow!(e)))?;
    }
    if let Some(v) = args.token_budget {
        p.token_budget = v;
    }
    if args.no_analysis {
        p.include_analysis = false;
    }
    if args.omit_no_change {
        p.include_no_change = false;
    }
    if let Some(v) = args.l_c {
        cfg.extraction.max_chain_len = v;
    }
    if let Some(v) = &args.model {
        cfg.completion.model = v.clone();
    }
    if let Some(v) = args.requests_per_minute {
        cfg.completion.requests_per_minute = Some(v);
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    cfg.prompt.validate().map_err(input)?;
    Ok(cfg)
}

pub fn run(args: RunArgs, config_file: Option<&Path>) -> Outcome {
    let cfg = run_config(&args, config_file)?;
    let provider = match args.provider {
        ProviderKind::Oracle => Provider::Oracle,
        ProviderKind::Replay => Provider::Replay {
            transcript: args
                .transcript
                .clone()
                .expect("clap requires --transcript for replay"),
        },
        ProviderKind::Openai => Provider::OpenAi {
            base_url: args.base_url.clone(),
            key_var: args.key_var.clone(),
        },
    };
    let paths = RunPaths {
        train: args.train,
        test: args.test,
        tables: args.tables,
        db_dir: args.db_dir,
        annotations: args.annotations,
        out_dir: args.out,
    };
    let summary = pipeline::run(&paths, &provider, &cfg).map_err(input)?;
    println!(
        "{} interactions, {} turns, {} failed; {} requests, {} replayed; direct rate {:.1}%",
        summary.interactions,
        summary.turns,
        summary.failures.len(),
        summary.requests,
        summary.replayed,
        summary.direct_rate
    );
    println!(
        "predictions: {}",
        paths.out_dir.join(pipeline::PREDICTIONS_FILE).display()
    );
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Outcome {
    let corpus = load_corpus(&args.corpus, &args.tables).map_err(input)?;
    for issue in &corpus.skipped {
        tracing::warn!(record = issue.record, "{}", issue.message);
    }
    let text = std::fs::read_to_string(&args.predictions)
        .with_context(|| format!("cannot read {}", args.predictions.display()))
        .map_err(input)?;
    let predictions = parse_predictions(&text);
    if predictions.len() != corpus.interactions.len() {
        eprintln!(
            "warning: {} prediction groups for {} interactions; missing turns count as wrong",
            predictions.len(),
            corpus.interactions.len()
        );
    }
    let report = score(&predictions, &corpus, args.db_dir.as_deref());
    print!("{}", report.render_table());
    if let Some(path) = &args.report {
        let json = serde_json::to_string_pretty(&report).map_err(input)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(input)?;
    }
    Ok(())
}

pub fn coverage(args: CoverageArgs) -> Outcome {
    if args.l_c_min == 0 || args.l_c_min > args.l_c_max {
        return Err(input(anyhow!("need 1 <= --l-c-min <= --l-c-max")));
    }
    let mut trees = Vec::new();
    for path in &args.corpus {
        let corpus = load_corpus(path, &args.tables).map_err(input)?;
        trees.extend(corpus.gold_trees());
    }
    let limits: Vec<Option<usize>> = (args.l_c_min..=args.l_c_max)
        .map(Some)
        .chain([None])
        .collect();
    let mut rows = Vec::new();
    for limit in &limits {
        let mut cells = Vec::new();
        for group in &args.groups {
            let cfg =
                ExtractionConfig::new(limit.unwrap_or(usize::MAX), group.rules()).map_err(input)?;
            cells.push(coverage_stats(&trees, &cfg));
        }
        rows.push(cells);
    }
    if args.json {
        let value: Vec<serde_json::Value> = limits
            .iter()
            .zip(&rows)
            .map(|(limit, cells)| {
                serde_json::json!({
                    "l_c": limit,
                    "cells": args.groups.iter().zip(cells).map(|(g, s)| serde_json::json!({
                        "group": g.label(),
                        "stats": s,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&value).map_err(input)?);
        return Ok(());
    }
    let mut out = format!("{:<8}", "l_c");
    for g in &args.groups {
        let _ = write!(out, "{:>10}", g.label());
    }
    out.push('\n');
    for (limit, cells) in limits.iter().zip(&rows) {
        let label = limit.map_or_else(|| "none".to_string(), |l| l.to_string());
        let _ = write!(out, "{label:<8}");
        for s in cells {
            let _ = write!(out, "{:>10.1}", 100.0 * s.coverage_ratio);
        }
        out.push('\n');
    }
    if let Some(s) = rows.first().and_then(|r| r.first()) {
        let _ = writeln!(
            out,
            "{} turn pairs; {} gold queries unparsed",
            s.total_pairs, s.unparseable
        );
    }
    print!("{out}");
    Ok(())
}
