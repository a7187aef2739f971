//! Deterministic providers: canned responses keyed by message hash, replay
//! of saved transcripts, and a gold-echo oracle.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{ChatModel, Completion, CompletionConfig, LlmError};
use crate::ast::SqlAst;
use crate::edit::EditChain;
use crate::prompt::{render_assistant_turn, PromptBundle, PromptConfig};

/// One exchanged request/response pair as persisted on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub interaction_id: usize,
    /// 1-based.
    pub turn: usize,
    pub message_hash: String,
    pub model: String,
    pub raw: String,
}

impl TranscriptRecord {
    pub fn now(
        interaction_id: usize,
        turn: usize,
        message_hash: String,
        model: &str,
        raw: String,
    ) -> Self {
        TranscriptRecord {
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or_default(),
            interaction_id,
            turn,
            message_hash,
            model: model.to_string(),
            raw,
        }
    }

    /// Reads a line-delimited transcript. A missing file reads as empty.
    pub fn load(path: &Path) -> std::io::Result<Vec<TranscriptRecord>> {
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line) {
                Ok(r) => out.push(r),
                // a run killed mid-write leaves a torn last line
                Err(e) => {
                    tracing::warn!(line = i + 1, error = %e, "unreadable transcript line skipped")
                }
            }
        }
        Ok(out)
    }
}

/// Appends records to a transcript file, one JSON object per line.
pub struct TranscriptWriter {
    out: Mutex<BufWriter<File>>,
}

impl TranscriptWriter {
    pub fn append(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(TranscriptWriter {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn write(&self, record: &TranscriptRecord) -> std::io::Result<()> {
        let mut out = self.out.lock().expect("transcript writer poisoned");
        serde_json::to_writer(&mut *out, record)?;
        out.write_all(b"\n")?;
        out.flush()
    }
}

/// The gold answer to one test turn, rendered on request.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleTurn {
    pub gold: SqlAst,
    pub chain: EditChain,
    pub analysis: Option<String>,
}

/// Answers from canned responses keyed by message hash, falling back to
/// oracle answers keyed by the test context. Unknown requests are refused.
#[derive(Default)]
pub struct MockModel {
    canned: HashMap<String, String>,
    oracle: HashMap<String, OracleTurn>,
    render: PromptConfig,
}

impl MockModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(
        mut self,
        message_hash: impl Into<String>,
        raw: impl Into<String>,
    ) -> Self {
        self.canned.insert(message_hash.into(), raw.into());
        self
    }

    pub fn with_records(mut self, records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        for r in records {
            self.canned.insert(r.message_hash, r.raw);
        }
        self
    }

    pub fn from_transcript(path: &Path) -> std::io::Result<Self> {
        Ok(Self::new().with_records(TranscriptRecord::load(path)?))
    }

    /// Gold-echo mode: `answers` maps [`crate::prompt::test_key`] values to
    /// gold turns, rendered in the scaffold of `render`.
    pub fn oracle(answers: HashMap<String, OracleTurn>, render: PromptConfig) -> Self {
        MockModel {
            canned: HashMap::new(),
            oracle: answers,
            render,
        }
    }

    pub fn len(&self) -> usize {
        self.canned.len() + self.oracle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ChatModel for MockModel {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(
        &self,
        bundle: &PromptBundle,
        _: &CompletionConfig,
    ) -> Result<Completion, LlmError> {
        let hash = bundle.message_hash();
        if let Some(raw) = self.canned.get(&hash) {
            return Ok(Completion {
                text: raw.clone(),
                usage: None,
            });
        }
        if let Some(t) = self.oracle.get(&bundle.test_key()) {
            let text = render_assistant_turn(
                bundle.exemplars_used + 1,
                bundle.test_questions.len(),
                &t.chain,
                t.analysis.as_deref(),
                &t.gold,
                &self.render,
            );
            return Ok(Completion { text, usage: None });
        }
        Err(LlmError::Refusal(format!(
            "no canned response for message hash {hash}"
        )))
    }
}
