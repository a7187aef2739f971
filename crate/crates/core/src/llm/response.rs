//! Locating the SQL, dict and edit chain inside a response, and turning the
//! configured one into a query.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::TokenUsage;
use crate::ast::SqlAst;
use crate::edit::dict::parse_sql_dict;
use crate::edit::{apply_chain, parse_rendered_edits_detailed, ChainStyle, EditChain};
use crate::parser::{parse_with, ParseOptions};
use crate::prompt::{Component, EDITS_INTRO};
use crate::schema::SchemaCatalog;

static SQL_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"So SQL(?:\s+\d+\s*-\s*\d+)?\s+is:").expect("valid regex"));
static DICT_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"So SQL dict(?:\s+\d+\s*-\s*\d+)?\s+is:").expect("valid regex"));
static ANY_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"So SQL(?: dict)?(?:\s+\d+\s*-\s*\d+)?\s+is:").expect("valid regex")
});
static SOURCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"can be edited from SQL\s+\d+\s*-\s*(\d+)").expect("valid regex"));

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelResponse {
    pub raw: String,
    pub sql: Option<String>,
    /// Parsed edit chain; `None` when absent or unreadable.
    pub chain: Option<EditChain>,
    pub chain_text: Option<String>,
    pub dict: Option<String>,
    /// The response says the query is written from scratch.
    pub direct: bool,
    pub latency_ms: u64,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Error, PartialEq)]
#[error("response contains no SQL, dict or edit chain")]
pub struct ExtractionEmpty;

#[derive(Debug, Error, PartialEq)]
pub enum ResolveError {
    #[error("prediction unparseable: {0}")]
    Unparseable(String),
    #[error("edit chain has no previous query to apply to")]
    MissingPrevious,
}

fn opts(catalog: Option<&SchemaCatalog>) -> ParseOptions<'_> {
    ParseOptions {
        catalog,
        lenient: true,
        normalize: true,
    }
}

fn clean_sql(text: &str) -> String {
    let joined = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.starts_with("```"))
        .collect::<Vec<_>>()
        .join(" ");
    joined.trim().trim_end_matches(';').trim().to_string()
}

/// Statement text following the last SQL marker, up to a blank line or the
/// next block.
fn after_sql_marker(raw: &str) -> Option<String> {
    let m = SQL_MARKER
        .find_iter(raw)
        .filter(|m| !raw[m.start()..].starts_with("So SQL dict"))
        .last()?;
    let rest = &raw[m.end()..];
    let mut lines = Vec::new();
    for line in rest.lines() {
        let t = line.trim();
        if t.is_empty() {
            if lines.is_empty() {
                continue;
            }
            break;
        }
        if ANY_MARKER.is_match(t) || t.starts_with(EDITS_INTRO) || t.starts_with("Let's think") {
            break;
        }
        lines.push(t);
    }
    let sql = clean_sql(&lines.join("\n"));
    (!sql.is_empty()).then_some(sql)
}

/// The whole text, or failing that the last line, that parses as SQL.
fn fallback_sql(raw: &str, catalog: Option<&SchemaCatalog>) -> Option<String> {
    let whole = clean_sql(raw);
    if !whole.is_empty() && parse_with(&whole, opts(catalog)).is_ok() {
        return Some(whole);
    }
    raw.lines()
        .rev()
        .map(clean_sql)
        .find(|l| !l.is_empty() && parse_with(l, opts(catalog)).is_ok())
}

/// The balanced JSON object following the last dict marker.
fn dict_block(raw: &str) -> Option<String> {
    let m = DICT_MARKER.find_iter(raw).last()?;
    let rest = &raw[m.end()..];
    let start = rest.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in rest[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(rest[start..start + i + 1].to_string());
                }
            }
            _ => {}
        }
    }
    None
}

fn chain_block(raw: &str) -> Option<String> {
    let at = raw.rfind(EDITS_INTRO)?;
    let rest = &raw[at + EDITS_INTRO.len()..];
    let end = ANY_MARKER
        .find(rest)
        .map(|m| m.start())
        .unwrap_or(rest.len());
    let text = rest[..end].trim();
    (!text.is_empty()).then(|| text.to_string())
}

/// Splits a response into its SQL, dict and chain blocks. Chain text that
/// does not parse leaves `chain` empty.
pub fn extract_components(
    raw: &str,
    style: ChainStyle,
    catalog: Option<&SchemaCatalog>,
) -> Result<ModelResponse, ExtractionEmpty> {
    let source_turn = SOURCE
        .captures_iter(raw)
        .last()
        .and_then(|c| c[1].parse::<usize>().ok());
    let direct = source_turn.is_none() && raw.contains("can be written directly");
    let chain_text = chain_block(raw);
    let chain = chain_text.as_deref().and_then(|t| {
        match parse_rendered_edits_detailed(t, style, catalog) {
            Ok((mut c, _)) => {
                c.source_turn = source_turn;
                Some(c)
            }
            Err(e) => {
                tracing::debug!(error = %e, "edit chain in response unreadable");
                None
            }
        }
    });
    let sql = after_sql_marker(raw).or_else(|| fallback_sql(raw, catalog));
    let dict = dict_block(raw);
    if sql.is_none() && dict.is_none() && chain_text.is_none() {
        return Err(ExtractionEmpty);
    }
    Ok(ModelResponse {
        raw: raw.to_string(),
        sql,
        chain,
        chain_text,
        dict,
        direct,
        ..ModelResponse::default()
    })
}

fn from_sql(resp: &ModelResponse, catalog: Option<&SchemaCatalog>) -> Result<SqlAst, ResolveError> {
    let sql = resp
        .sql
        .as_deref()
        .ok_or_else(|| ResolveError::Unparseable("no SQL block".into()))?;
    parse_with(sql, opts(catalog)).map_err(|e| ResolveError::Unparseable(e.to_string()))
}

fn from_dict(
    resp: &ModelResponse,
    catalog: Option<&SchemaCatalog>,
) -> Result<SqlAst, ResolveError> {
    let dict = resp
        .dict
        .as_deref()
        .ok_or_else(|| ResolveError::Unparseable("no dict block".into()))?;
    parse_sql_dict(dict, catalog).map_err(|e| ResolveError::Unparseable(e.to_string()))
}

/// Reads the prediction from `component`. The chain component applies the
/// parsed edits to `previous`; a response that writes its query directly has
/// no chain and falls back to its dict, then its SQL.
pub fn resolve_prediction(
    resp: &ModelResponse,
    previous: Option<&SqlAst>,
    component: Component,
    catalog: Option<&SchemaCatalog>,
) -> Result<SqlAst, ResolveError> {
    match component {
        Component::Sql => from_sql(resp, catalog),
        Component::Dict => from_dict(resp, catalog),
        Component::Code => {
            if resp.chain_text.is_none() {
                return from_dict(resp, catalog).or_else(|_| from_sql(resp, catalog));
            }
            let chain = resp
                .chain
                .as_ref()
                .ok_or_else(|| ResolveError::Unparseable("edit chain does not parse".into()))?;
            let prev = previous.ok_or(ResolveError::MissingPrevious)?;
            apply_chain(prev, chain).map_err(|e| ResolveError::Unparseable(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalize::ast_equal;

    const NL_TURN: &str = "Let's think step by step.\nSQL 1-2 can be edited from SQL 1-1.\nThe previous question asked for a list of all the parties, while the current question asks for the parties to be ordered by the number of hosts they have.\nTherefore, following edit operations are used:\nFROM clause:\n- no change is needed\nSELECT clause:\n- no change is needed\nWHERE clause:\n- no change is needed\nGROUP BY clause:\n- no change is needed\nORDER BY clause:\n- add party.Number_of_hosts\n- change order to ASC\nLIMIT clause:\n- no change is needed\nINTERSECT/UNION/EXCEPT:\n- no change is needed\nSo SQL 1-2 is:\nSELECT * FROM party ORDER BY Number_of_hosts ASC";

    fn p(sql: &str) -> SqlAst {
        parse_with(sql, ParseOptions::without_catalog()).unwrap()
    }

    #[test]
    fn reads_the_scaffolded_turn() {
        let r = extract_components(NL_TURN, ChainStyle::NaturalLanguage, None).unwrap();
        assert_eq!(
            r.sql.as_deref(),
            Some("SELECT * FROM party ORDER BY Number_of_hosts ASC")
        );
        let chain = r.chain.clone().unwrap();
        assert_eq!(chain.len(), 2);
        assert_eq!(chain.source_turn, Some(1));
        assert!(!r.direct);
        let prev = p("SELECT * FROM party");
        let want = p("SELECT * FROM party ORDER BY party.Number_of_hosts ASC");
        for c in [Component::Sql, Component::Code] {
            assert!(ast_equal(
                &resolve_prediction(&r, Some(&prev), c, None).unwrap(),
                &want
            ));
        }
        assert_eq!(
            resolve_prediction(&r, None, Component::Code, None),
            Err(ResolveError::MissingPrevious)
        );
    }

    #[test]
    fn bare_sql_and_refusals() {
        let r = extract_components(
            "Here you go:\nSELECT name FROM t;\n",
            ChainStyle::EditRule,
            None,
        )
        .unwrap();
        assert_eq!(r.sql.as_deref(), Some("SELECT name FROM t"));
        assert_eq!(
            extract_components("I cannot answer", ChainStyle::EditRule, None),
            Err(ExtractionEmpty)
        );
    }

    #[test]
    fn dict_block_is_balanced() {
        let raw = "So SQL 1-1 is:\nSELECT * FROM t\nSo SQL dict 1-1 is:\n{\n\t\"from\": {\"tables\": [\"t\"]},\n\t\"select\": [\"*\"],\n\t\"where\": {\"conditions\": [\"t.a = '}'\"]}\n}\ntrailing";
        let r = extract_components(raw, ChainStyle::Code, None).unwrap();
        assert!(r.dict.as_deref().unwrap().ends_with("]}\n}"));
        assert_eq!(r.sql.as_deref(), Some("SELECT * FROM t"));
        let ast = resolve_prediction(&r, None, Component::Dict, None).unwrap();
        assert_eq!(ast.where_clause.unwrap().conditions.len(), 1);
        let direct = resolve_prediction(&r, None, Component::Code, None).unwrap();
        assert!(direct.where_clause.is_some());
    }
}
