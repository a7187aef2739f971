//! Multi-turn text-to-SQL by chains of edits: SQL trees, edit extraction and
//! rendering, few-shot prompt assembly, a chat-model boundary and scoring.

pub mod ast;
pub mod corpus;
pub mod edit;
pub mod eval;
pub mod extract;
pub mod lexer;
pub mod llm;
pub mod normalize;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod schema;
pub mod unparse;

pub use ast::SqlAst;
pub use corpus::{load_corpus, Corpus, Interaction};
pub use edit::{
    apply_chain, parse_rendered_edits, render_chain, ChainStyle, EditChain, RuleTag, UnitEdit,
};
pub use eval::{evaluate, EvalReport};
pub use extract::{
    coverage_stats, extract_chain, select_source, ExtractionConfig, RuleGroup, Uneditable,
};
pub use llm::{CompletionConfig, ModelResponse};
pub use normalize::{ast_equal, normalize};
pub use parser::{parse, parse_with, ParseOptions};
pub use pipeline::{RunConfig, RunManifest};
pub use prompt::{PromptBundle, PromptConfig};
pub use schema::SchemaCatalog;
pub use unparse::unparse;
