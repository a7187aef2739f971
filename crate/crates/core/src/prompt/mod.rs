//! Few-shot prompt assembly: instruction, schema blocks, exemplar turns with
//! rendered chains, and the live test context.

mod exemplars;
mod schema_text;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::SqlAst;
use crate::edit::dict::render_sql_dict;
use crate::edit::{render_chain, rule_catalog_text, ChainStyle, EditChain};
use crate::unparse::unparse;

pub use exemplars::{build_exemplar, select_exemplars, AnnotationRecord, Annotations};
pub use schema_text::{serialize_schema, SchemaText, EXAMPLE_ROWS};

pub const INSTRUCTION: &str =
    "Given the database schema, you need to translate the question into the SQL query.";
pub const REASONING_OPENER: &str = "Let's think step by step.";
pub const EDITS_INTRO: &str = "Therefore, following edit operations are used:";

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("prompt needs {needed} tokens even without exemplars; budget is {budget}")]
    ContextOverflow { needed: usize, budget: usize },
    #[error("{questions} test questions need {} prior responses, got {responses}", questions.saturating_sub(1))]
    ResponseCount { questions: usize, responses: usize },
    #[error("insufficient training corpus: {0}")]
    InsufficientCorpus(String),
    #[error("bad annotation file: {0}")]
    Annotations(String),
    #[error("invalid prompt configuration: {0}")]
    Config(String),
}

/// A block of a code-style response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Code,
    Dict,
    Sql,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Code => "code",
            Component::Dict => "dict",
            Component::Sql => "sql",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "code" | "chain" => Ok(Component::Code),
            "dict" => Ok(Component::Dict),
            "sql" => Ok(Component::Sql),
            other => Err(format!("unknown component `{other}`")),
        }
    }
}

/// Parses an order such as `code+sql+dict`.
pub fn parse_component_order(s: &str) -> Result<[Component; 3], String> {
    let parts: Vec<Component> = s.split('+').map(str::parse).collect::<Result<_, _>>()?;
    let order: [Component; 3] = parts
        .try_into()
        .map_err(|_| format!("`{s}` must name three components"))?;
    check_order(&order)?;
    Ok(order)
}

fn check_order(order: &[Component; 3]) -> Result<(), String> {
    for c in [Component::Code, Component::Dict, Component::Sql] {
        if !order.contains(&c) {
            return Err(format!("component order lacks `{c}`"));
        }
    }
    Ok(())
}

/// How prompt size is measured against the budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetCounter {
    Whitespace,
    /// One token per four characters, rounded up.
    #[default]
    ApproxChars,
}

impl BudgetCounter {
    pub fn count(self, text: &str) -> usize {
        match self {
            BudgetCounter::Whitespace => text.split_whitespace().count(),
            BudgetCounter::ApproxChars => text.chars().count().div_ceil(4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub style: ChainStyle,
    pub k_d: usize,
    pub k_e: usize,
    pub seed: u64,
    pub include_no_change: bool,
    pub include_analysis: bool,
    /// Block order of code-style responses.
    pub component_order: [Component; 3],
    /// Block that predictions are read from.
    pub post_process: Component,
    pub token_budget: usize,
    pub budget_counter: BudgetCounter,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            style: ChainStyle::EditRule,
            k_d: 4,
            k_e: 4,
            seed: 42,
            include_no_change: true,
            include_analysis: true,
            component_order: [Component::Code, Component::Sql, Component::Dict],
            post_process: Component::Sql,
            token_budget: 16_000,
            budget_counter: BudgetCounter::ApproxChars,
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.k_d == 0 || self.k_e == 0 {
            return Err(PromptError::Config("k_d and k_e must be positive".into()));
        }
        check_order(&self.component_order).map_err(PromptError::Config)?;
        if self.style != ChainStyle::Code && self.post_process == Component::Dict {
            return Err(PromptError::Config(
                "dict post-processing needs the code style".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExemplarTurn {
    pub question: String,
    pub gold: SqlAst,
    pub chain: EditChain,
    pub analysis: Option<String>,
}

/// A training interaction shown in the prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub db_id: String,
    pub interaction_id: usize,
    pub schema_text: String,
    pub turns: Vec<ExemplarTurn>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The message list sent to the model for one test turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub messages: Vec<ChatMessage>,
    /// Index of the first test-context message.
    pub test_start: usize,
    pub exemplars_used: usize,
    pub exemplars_dropped: usize,
    pub test_db: String,
    pub test_questions: Vec<String>,
}

impl PromptBundle {
    /// Stable digest of the message list.
    pub fn message_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&self.messages).expect("messages serialize"))
    }

    /// Digest of the test database and questions, independent of exemplars
    /// and earlier responses.
    pub fn test_key(&self) -> String {
        test_key(&self.test_db, &self.test_questions)
    }

    /// Message count including the response still to be generated.
    pub fn slots(&self) -> usize {
        self.messages.len() + 1
    }

    pub fn transcript(&self) -> String {
        render_transcript(&self.messages)
    }

    /// Transcript of the instruction and exemplar messages only.
    pub fn exemplar_transcript(&self) -> String {
        render_transcript(&self.messages[..self.test_start])
    }

    pub fn tokens(&self, counter: BudgetCounter) -> usize {
        self.messages
            .iter()
            .map(|m| counter.count(&m.content))
            .sum()
    }
}

pub fn test_key(db_id: &str, questions: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(db_id.as_bytes());
    for q in questions {
        h.update([0u8]);
        h.update(q.as_bytes());
    }
    hex::encode(h.finalize())
}

/// `role: X` / `content:` blocks separated by blank lines.
pub fn render_transcript(messages: &[ChatMessage]) -> String {
    let mut out = messages
        .iter()
        .map(|m| format!("role: {}\ncontent:\n{}", m.role.name(), m.content))
        .collect::<Vec<_>>()
        .join("\n\n");
    out.push('\n');
    out
}

/// The system message; the edit-rule style appends the rule catalog.
pub fn system_text(style: ChainStyle) -> String {
    match style {
        ChainStyle::EditRule => format!("{INSTRUCTION}\n{}", rule_catalog_text()),
        _ => INSTRUCTION.to_string(),
    }
}

/// `Question i-j: ...`, preceded by the schema block on a first turn.
pub fn render_user_turn(
    ordinal: usize,
    turn: usize,
    question: &str,
    schema: Option<&str>,
) -> String {
    match schema {
        Some(s) => format!("Database schema:\n{s}\nQuestion {ordinal}-{turn}: {question}"),
        None => format!("Question {ordinal}-{turn}: {question}"),
    }
}

/// The reasoning scaffold answering question `ordinal-turn` (1-based).
pub fn render_assistant_turn(
    ordinal: usize,
    turn: usize,
    chain: &EditChain,
    analysis: Option<&str>,
    sql: &SqlAst,
    config: &PromptConfig,
) -> String {
    let mut lines: Vec<String> = vec![REASONING_OPENER.to_string()];
    match (chain.direct, chain.source_turn) {
        (false, Some(src)) => lines.push(format!("SQL {ordinal}-{turn} can be edited from SQL {ordinal}-{src}.")),
        _ => lines.push(format!(
            "SQL {ordinal}-{turn} can be written directly instead of being edited from previous SQL."
        )),
    }
    if config.include_analysis {
        if let Some(a) = analysis {
            lines.push(a.trim().to_string());
        }
    }
    let edited = !chain.direct && chain.source_turn.is_some();
    let code = || {
        let text = render_chain(
            chain,
            config.style,
            config.include_no_change || chain.is_empty(),
        );
        format!("{EDITS_INTRO}\n{text}")
    };
    let sql_block = || format!("So SQL {ordinal}-{turn} is:\n{}", unparse(sql));
    if config.style == ChainStyle::Code {
        for c in config.component_order {
            match c {
                Component::Code if edited => lines.push(code()),
                Component::Code => {}
                Component::Sql => lines.push(sql_block()),
                Component::Dict => lines.push(format!(
                    "So SQL dict {ordinal}-{turn} is:\n{}",
                    render_sql_dict(sql)
                )),
            }
        }
    } else {
        if edited {
            lines.push(code());
        }
        lines.push(sql_block());
    }
    lines.join("\n")
}

/// User and assistant text of exemplar turn `turn_index` (0-based) when the
/// exemplar is shown as number `ordinal`.
pub fn render_exemplar_turn(
    exemplar: &Exemplar,
    ordinal: usize,
    turn_index: usize,
    config: &PromptConfig,
) -> (String, String) {
    let t = &exemplar.turns[turn_index];
    let schema = (turn_index == 0).then_some(exemplar.schema_text.as_str());
    (
        render_user_turn(ordinal, turn_index + 1, &t.question, schema),
        render_assistant_turn(
            ordinal,
            turn_index + 1,
            &t.chain,
            t.analysis.as_deref(),
            &t.gold,
            config,
        ),
    )
}

/// The interaction being answered.
#[derive(Clone, Debug, PartialEq)]
pub struct TestContext {
    pub db_id: String,
    pub schema_text: String,
    /// Questions up to and including the current one.
    pub questions: Vec<String>,
}

fn assemble(
    exemplars: &[Exemplar],
    test: &TestContext,
    prior: &[String],
    config: &PromptConfig,
) -> PromptBundle {
    let mut messages = vec![ChatMessage::new(Role::System, system_text(config.style))];
    for (i, ex) in exemplars.iter().enumerate() {
        for j in 0..ex.turns.len() {
            let (user, assistant) = render_exemplar_turn(ex, i + 1, j, config);
            messages.push(ChatMessage::new(Role::User, user));
            messages.push(ChatMessage::new(Role::Assistant, assistant));
        }
    }
    let test_start = messages.len();
    let ordinal = exemplars.len() + 1;
    for (j, q) in test.questions.iter().enumerate() {
        let schema = (j == 0).then_some(test.schema_text.as_str());
        messages.push(ChatMessage::new(
            Role::User,
            render_user_turn(ordinal, j + 1, q, schema),
        ));
        if let Some(r) = prior.get(j) {
            messages.push(ChatMessage::new(Role::Assistant, r.clone()));
        }
    }
    PromptBundle {
        messages,
        test_start,
        exemplars_used: exemplars.len(),
        exemplars_dropped: 0,
        test_db: test.db_id.clone(),
        test_questions: test.questions.clone(),
    }
}

/// Builds the prompt for the last question of `test`. Earlier model
/// responses are replayed verbatim. Exemplars are dropped whole from the end
/// until the prompt fits the token budget.
pub fn build_prompt(
    exemplars: &[Exemplar],
    test: &TestContext,
    prior_responses: &[String],
    config: &PromptConfig,
) -> Result<PromptBundle, PromptError> {
    if test.questions.is_empty() || prior_responses.len() + 1 != test.questions.len() {
        return Err(PromptError::ResponseCount {
            questions: test.questions.len(),
            responses: prior_responses.len(),
        });
    }
    let mut needed = 0;
    for keep in (0..=exemplars.len()).rev() {
        let mut bundle = assemble(&exemplars[..keep], test, prior_responses, config);
        needed = bundle.tokens(config.budget_counter);
        if needed <= config.token_budget {
            bundle.exemplars_dropped = exemplars.len() - keep;
            if keep < exemplars.len() {
                tracing::debug!(
                    dropped = bundle.exemplars_dropped,
                    "exemplars dropped to fit the budget"
                );
            }
            return Ok(bundle);
        }
    }
    Err(PromptError::ContextOverflow {
        needed,
        budget: config.token_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::UnitEdit;
    use crate::parser::{parse_with, ParseOptions};

    fn p(sql: &str) -> SqlAst {
        parse_with(sql, ParseOptions::without_catalog()).unwrap()
    }

    fn exemplar(turns: usize) -> Exemplar {
        let base = p("SELECT * FROM t");
        Exemplar {
            db_id: "d".into(),
            interaction_id: 0,
            schema_text: "create table t (\n\ta number\n)".into(),
            turns: (0..turns)
                .map(|j| ExemplarTurn {
                    question: format!("q{j}"),
                    gold: base.clone(),
                    chain: if j == 0 {
                        EditChain::direct()
                    } else {
                        EditChain::edited(Some(j), vec![])
                    },
                    analysis: None,
                })
                .collect(),
        }
    }

    fn test_ctx(n: usize) -> TestContext {
        TestContext {
            db_id: "d".into(),
            schema_text: "create table t (\n\ta number\n)".into(),
            questions: (0..n).map(|i| format!("t{i}")).collect(),
        }
    }

    #[test]
    fn lone_question_gives_system_and_user() {
        let b = build_prompt(&[], &test_ctx(1), &[], &PromptConfig::default()).unwrap();
        assert_eq!(b.messages.len(), 2);
        assert_eq!(b.slots(), 3);
        assert_eq!(b.messages[0].role, Role::System);
        assert!(b.messages[0]
            .content
            .contains("You can use following operations to edit SQL:"));
        assert!(b.messages[1]
            .content
            .starts_with("Database schema:\ncreate table t"));
        assert!(b.messages[1].content.ends_with("Question 1-1: t0"));
    }

    #[test]
    fn message_count_follows_turn_arithmetic() {
        let ex: Vec<Exemplar> = (1..=16).map(|i| exemplar(1 + i % 4)).collect();
        let total: usize = ex.iter().map(|e| e.turns.len()).sum();
        let test = test_ctx(3);
        let prior = vec!["r1".to_string(), "r2".to_string()];
        let cfg = PromptConfig {
            token_budget: usize::MAX,
            ..PromptConfig::default()
        };
        let b = build_prompt(&ex, &test, &prior, &cfg).unwrap();
        assert_eq!(b.slots(), 1 + 2 * (total + 3));
        assert_eq!(b.messages[b.messages.len() - 2].content, "r2");
        let roles: Vec<Role> = b.messages[1..].iter().map(|m| m.role).collect();
        assert!(roles
            .chunks(2)
            .all(|c| c[0] == Role::User && c.get(1).is_none_or(|r| *r == Role::Assistant)));
        assert!(b
            .messages
            .last()
            .unwrap()
            .content
            .ends_with("Question 17-3: t2"));
    }

    #[test]
    fn budget_drops_whole_exemplars_from_the_end() {
        let ex: Vec<Exemplar> = (0..6).map(|_| exemplar(2)).collect();
        let full = build_prompt(
            &ex,
            &test_ctx(1),
            &[],
            &PromptConfig {
                token_budget: usize::MAX,
                ..PromptConfig::default()
            },
        )
        .unwrap();
        let mut last = usize::MAX;
        for budget in (0..full.tokens(BudgetCounter::ApproxChars))
            .rev()
            .step_by(37)
        {
            let cfg = PromptConfig {
                token_budget: budget,
                ..PromptConfig::default()
            };
            match build_prompt(&ex, &test_ctx(1), &[], &cfg) {
                Ok(b) => {
                    assert!(b.exemplars_used <= last);
                    assert!(b.tokens(cfg.budget_counter) <= budget);
                    assert_eq!(b.exemplars_used + b.exemplars_dropped, 6);
                    last = b.exemplars_used;
                }
                Err(e) => assert!(matches!(e, PromptError::ContextOverflow { .. })),
            }
        }
    }

    #[test]
    fn response_count_is_checked() {
        assert!(matches!(
            build_prompt(&[], &test_ctx(2), &[], &PromptConfig::default()),
            Err(PromptError::ResponseCount { .. })
        ));
    }

    #[test]
    fn code_blocks_follow_the_configured_order() {
        let chain = EditChain::edited(
            Some(1),
            vec![UnitEdit::Limit {
                old: None,
                new: Some(3),
            }],
        );
        let cfg = PromptConfig {
            style: ChainStyle::Code,
            component_order: parse_component_order("code+sql+dict").unwrap(),
            ..PromptConfig::default()
        };
        let text = render_assistant_turn(1, 2, &chain, None, &p("SELECT * FROM t LIMIT 3"), &cfg);
        let at = |s: &str| text.find(s).unwrap();
        assert!(at(EDITS_INTRO) < at("So SQL 1-2 is:"));
        assert!(at("So SQL 1-2 is:") < at("So SQL dict 1-2 is:"));
        let cfg = PromptConfig {
            component_order: parse_component_order("dict+sql+code").unwrap(),
            ..cfg
        };
        let text = render_assistant_turn(1, 2, &chain, None, &p("SELECT * FROM t LIMIT 3"), &cfg);
        let at = |s: &str| text.find(s).unwrap();
        assert!(at("So SQL dict 1-2 is:") < at("So SQL 1-2 is:"));
        assert!(at("So SQL 1-2 is:") < at(EDITS_INTRO));
        assert!(parse_component_order("code+code+sql").is_err());
    }

    #[test]
    fn first_turn_is_written_directly() {
        let (user, assistant) = render_exemplar_turn(&exemplar(2), 3, 0, &PromptConfig::default());
        assert!(user.starts_with("Database schema:"));
        assert_eq!(
            assistant,
            "Let's think step by step.\nSQL 3-1 can be written directly instead of being edited from previous SQL.\nSo SQL 3-1 is:\nSELECT * FROM t"
        );
    }
}
