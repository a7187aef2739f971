//! End-to-end runs: exemplar selection, per-turn prompting, post-processing
//! and the on-disk artifacts of a run.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::SqlAst;
use crate::corpus::{database_path, load_corpus, Corpus, CorpusError, Interaction};
use crate::edit::EditChain;
use crate::eval::render_predictions;
use crate::extract::{select_source_numbered, ExtractionConfig};
use crate::llm::{
    extract_components, resolve_prediction, ChatModel, Client, CompletionConfig, LlmError,
    MockModel, OpenAiCompatible, OracleTurn, TranscriptRecord, TranscriptWriter,
};
use crate::prompt::{
    build_prompt, render_transcript, select_exemplars, serialize_schema, test_key, Annotations,
    ChatMessage, Exemplar, PromptConfig, PromptError, Role, TestContext,
};
use crate::unparse::unparse;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.sql";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PROMPTS_DIR: &str = "prompts";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("provider setup failed: {0}")]
    Provider(LlmError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where completions come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provider {
    /// Echoes the gold query of the test turn in the configured scaffold.
    Oracle,
    /// Answers only from a saved transcript.
    Replay { transcript: PathBuf },
    /// A chat-completions endpoint; the key is read from `key_var`.
    OpenAi { base_url: String, key_var: String },
}

impl Provider {
    pub fn name(&self) -> &'static str {
        match self {
            Provider::Oracle => "oracle",
            Provider::Replay { .. } => "replay",
            Provider::OpenAi { .. } => "openai",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub prompt: PromptConfig,
    pub extraction: ExtractionConfig,
    pub completion: CompletionConfig,
    /// Interactions processed at once; also bounds in-flight requests.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            prompt: PromptConfig::default(),
            extraction: ExtractionConfig::sparc(),
            completion: CompletionConfig::default(),
            workers: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub tables: PathBuf,
    pub db_dir: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Everything needed to repeat a run against its transcript.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub paths: RunPaths,
    pub provider: Provider,
    pub seed: u64,
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnFailure {
    pub interaction_id: usize,
    pub turn: usize,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub interactions: usize,
    pub turns: usize,
    pub exemplars: usize,
    pub requests: usize,
    pub replayed: usize,
    pub non_first_turns: usize,
    pub direct_non_first: usize,
    /// Share of non-first turns the model wrote directly, in percent.
    pub direct_rate: f64,
    pub failures: Vec<TurnFailure>,
}

/// Result of answering the test corpus.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub predictions: Vec<Vec<Option<String>>>,
    pub summary: RunSummary,
    /// One rendered conversation per interaction, final turn included.
    pub prompt_transcripts: Vec<String>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Gold turns of `corpus` keyed the way the oracle mock looks them up, with
/// the chain each turn would be taught with.
pub fn oracle_answers(
    corpus: &Corpus,
    extraction: &ExtractionConfig,
) -> HashMap<String, OracleTurn> {
    let mut answers = HashMap::new();
    for it in &corpus.interactions {
        let questions: Vec<String> = it.turns.iter().map(|t| t.utterance.clone()).collect();
        for (j, turn) in it.turns.iter().enumerate() {
            let Some(gold) = &turn.gold else { continue };
            let history = it.turns[..j]
                .iter()
                .enumerate()
                .filter_map(|(k, t)| t.gold.as_ref().map(|g| (k + 1, g)));
            let chain = if j == 0 {
                EditChain::direct()
            } else {
                select_source_numbered(history, gold, extraction)
            };
            answers.insert(
                test_key(&it.db_id, &questions[..=j]),
                OracleTurn {
                    gold: gold.clone(),
                    chain,
                    analysis: None,
                },
            );
        }
    }
    answers
}

struct TurnContext<'a> {
    exemplars: &'a [Exemplar],
    corpus: &'a Corpus,
    db_dir: Option<&'a Path>,
    client: &'a Client,
    config: &'a RunConfig,
    replay: &'a HashMap<String, String>,
    writer: Option<&'a TranscriptWriter>,
    requests: &'a AtomicUsize,
    replayed: &'a AtomicUsize,
}

struct InteractionResult {
    predictions: Vec<Option<String>>,
    failures: Vec<TurnFailure>,
    direct_non_first: usize,
    transcript: String,
}

fn answer_interaction(index: usize, it: &Interaction, cx: &TurnContext<'_>) -> InteractionResult {
    let catalog = cx.corpus.catalog(&it.db_id);
    let schema_text = catalog
        .map(|c| {
            serialize_schema(c, cx.db_dir.map(|d| database_path(d, &it.db_id)).as_deref()).text
        })
        .unwrap_or_default();
    let questions: Vec<String> = it.turns.iter().map(|t| t.utterance.clone()).collect();
    let mut responses: Vec<String> = Vec::new();
    let mut trees: Vec<Option<SqlAst>> = Vec::new();
    let mut out = InteractionResult {
        predictions: Vec::new(),
        failures: Vec::new(),
        direct_non_first: 0,
        transcript: String::new(),
    };
    let fail = |turn: usize, error: String| {
        tracing::warn!(interaction = index, turn, %error, "turn failed");
        TurnFailure {
            interaction_id: index,
            turn,
            error,
        }
    };
    for j in 0..questions.len() {
        let test = TestContext {
            db_id: it.db_id.clone(),
            schema_text: schema_text.clone(),
            questions: questions[..=j].to_vec(),
        };
        let bundle = match build_prompt(cx.exemplars, &test, &responses, &cx.config.prompt) {
            Ok(b) => b,
            Err(e) => {
                out.failures.push(fail(j + 1, e.to_string()));
                responses.push(String::new());
                trees.push(None);
                out.predictions.push(None);
                continue;
            }
        };
        let hash = bundle.message_hash();
        let raw = if let Some(raw) = cx.replay.get(&hash) {
            cx.replayed.fetch_add(1, Ordering::Relaxed);
            Ok(raw.clone())
        } else {
            cx.requests.fetch_add(1, Ordering::Relaxed);
            cx.client.complete(&bundle).map(|r| {
                if let Some(w) = cx.writer {
                    let rec = TranscriptRecord::now(
                        index,
                        j + 1,
                        hash.clone(),
                        cx.client.model_name(),
                        r.raw.clone(),
                    );
                    if let Err(e) = w.write(&rec) {
                        tracing::error!(error = %e, "transcript write failed");
                    }
                }
                r.raw
            })
        };
        let prediction = raw.map_err(|e| e.to_string()).and_then(|raw| {
            responses.push(raw.clone());
            let resp = extract_components(&raw, cx.config.prompt.style, catalog)
                .map_err(|e| e.to_string())?;
            if j > 0 && resp.direct {
                out.direct_non_first += 1;
            }
            let source = resp.chain.as_ref().and_then(|c| c.source_turn);
            let previous = match source {
                Some(s) if (1..=j).contains(&s) => trees[s - 1].as_ref(),
                _ => trees.iter().rev().flatten().next(),
            };
            resolve_prediction(&resp, previous, cx.config.prompt.post_process, catalog)
                .map_err(|e| e.to_string())
        });
        if responses.len() == j {
            responses.push(String::new());
        }
        if j + 1 == questions.len() {
            let mut messages = bundle.messages.clone();
            messages.push(ChatMessage::new(Role::Assistant, responses[j].clone()));
            out.transcript = render_transcript(&messages);
        }
        match prediction {
            Ok(ast) => {
                out.predictions.push(Some(unparse(&ast)));
                trees.push(Some(ast));
            }
            Err(e) => {
                out.failures.push(fail(j + 1, e));
                out.predictions.push(None);
                trees.push(None);
            }
        }
    }
    out
}

/// Answers every interaction of `corpus`, turn by turn. Responses found in
/// `replay` (by message hash) are reused without calling `client`; fresh
/// ones are appended to `writer`. Per-turn failures are recorded and the
/// run continues.
#[allow(clippy::too_many_arguments)]
pub fn answer_corpus(
    exemplars: &[Exemplar],
    corpus: &Corpus,
    db_dir: Option<&Path>,
    client: &Client,
    config: &RunConfig,
    replay: &HashMap<String, String>,
    writer: Option<&TranscriptWriter>,
) -> RunOutput {
    let requests = AtomicUsize::new(0);
    let replayed = AtomicUsize::new(0);
    let cx = TurnContext {
        exemplars,
        corpus,
        db_dir,
        client,
        config,
        replay,
        writer,
        requests: &requests,
        replayed: &replayed,
    };
    let work = || {
        corpus
            .interactions
            .par_iter()
            .enumerate()
            .map(|(i, it)| answer_interaction(i, it, &cx))
            .collect::<Vec<_>>()
    };
    let results = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(work),
        Err(e) => {
            tracing::warn!(error = %e, "worker pool unavailable, using the global pool");
            work()
        }
    };
    let mut output = RunOutput::default();
    let s = &mut output.summary;
    s.interactions = results.len();
    s.exemplars = exemplars.len();
    for r in results {
        s.turns += r.predictions.len();
        s.non_first_turns += r.predictions.len().saturating_sub(1);
        s.direct_non_first += r.direct_non_first;
        s.failures.extend(r.failures);
        output.predictions.push(r.predictions);
        output.prompt_transcripts.push(r.transcript);
    }
    s.requests = requests.into_inner();
    s.replayed = replayed.into_inner();
    s.direct_rate = if s.non_first_turns == 0 {
        0.0
    } else {
        100.0 * s.direct_non_first as f64 / s.non_first_turns as f64
    };
    tracing::info!(
        direct_rate = s.direct_rate,
        failures = s.failures.len(),
        requests = s.requests,
        replayed = s.replayed,
        "run finished"
    );
    output
}

fn build_model(
    provider: &Provider,
    test: &Corpus,
    config: &RunConfig,
) -> Result<Box<dyn ChatModel>, PipelineError> {
    Ok(match provider {
        Provider::Oracle => Box::new(MockModel::oracle(
            oracle_answers(test, &config.extraction),
            config.prompt.clone(),
        )),
        Provider::Replay { transcript } => {
            Box::new(MockModel::from_transcript(transcript).map_err(io_err(transcript))?)
        }
        Provider::OpenAi { base_url, key_var } => Box::new(
            OpenAiCompatible::from_env(
                base_url,
                key_var,
                Duration::from_secs(config.completion.timeout_secs),
            )
            .map_err(PipelineError::Provider)?,
        ),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Runs the whole pipeline into `paths.out_dir`: manifest first, then the
/// transcript as responses arrive, then predictions, prompt transcripts and
/// a summary. An existing transcript in the output directory is resumed.
pub fn run(
    paths: &RunPaths,
    provider: &Provider,
    config: &RunConfig,
) -> Result<RunSummary, PipelineError> {
    config.prompt.validate()?;
    let train = load_corpus(&paths.train, &paths.tables)?;
    let test = load_corpus(&paths.test, &paths.tables)?;
    let annotations = match &paths.annotations {
        Some(p) => Annotations::load(p)?,
        None => Annotations::default(),
    };
    let db_dir = paths.db_dir.as_deref();
    let exemplars = select_exemplars(
        &train,
        config.prompt.k_d,
        config.prompt.k_e,
        config.prompt.seed,
        &config.extraction,
        &annotations,
        db_dir,
    )?;
    let model = build_model(provider, &test, config)?;
    let client = Client::new(model, config.completion.clone());

    let out = &paths.out_dir;
    let prompts = out.join(PROMPTS_DIR);
    fs::create_dir_all(&prompts).map_err(io_err(&prompts))?;
    let mut manifest = RunManifest {
        config: config.clone(),
        paths: paths.clone(),
        provider: provider.clone(),
        seed: config.prompt.seed,
        started_ms: now_ms(),
        finished_ms: None,
    };
    let manifest_path = out.join(MANIFEST_FILE);
    write_json(&manifest_path, &manifest)?;

    let transcript_path = out.join(TRANSCRIPT_FILE);
    let replay: HashMap<String, String> = TranscriptRecord::load(&transcript_path)
        .map_err(io_err(&transcript_path))?
        .into_iter()
        .map(|r| (r.message_hash, r.raw))
        .collect();
    if !replay.is_empty() {
        tracing::info!(
            responses = replay.len(),
            "resuming from existing transcript"
        );
    }
    let writer = TranscriptWriter::append(&transcript_path).map_err(io_err(&transcript_path))?;
    let output = answer_corpus(
        &exemplars,
        &test,
        db_dir,
        &client,
        config,
        &replay,
        Some(&writer),
    );

    let predictions_path = out.join(PREDICTIONS_FILE);
    fs::write(&predictions_path, render_predictions(&output.predictions))
        .map_err(io_err(&predictions_path))?;
    for (i, text) in output.prompt_transcripts.iter().enumerate() {
        let path = prompts.join(format!("{i:05}.txt"));
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    write_json(&out.join(SUMMARY_FILE), &output.summary)?;
    manifest.finished_ms = Some(now_ms());
    write_json(&manifest_path, &manifest)?;
    Ok(output.summary)
}
