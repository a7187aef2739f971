//! Text forms of edit chains (edit-rule calls, Python-like statements and
//! plain-English phrases) and the parsers that read them back.

use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::{ChainStyle, EditChain, Heading, RuleTag, SelectEntry, Side, UnitEdit};
use crate::ast::*;
use crate::parser::{
    parse_column, parse_predicate, parse_select_entry, parse_value_expr, parse_with, ParseOptions,
};
use crate::schema::SchemaCatalog;
use crate::unparse::{
    column_text, predicate_text, select_entry_text, unparse_qualified, value_text,
};

pub const NO_CHANGE: &str = "- no change is needed";

const RULE_LINES: [&str; 14] = [
    "EditIUE(intersect/union/except, left/right, SQL): Append SQL to the left/right side of the previous SQL with intersect/union/except keyword. Delete the left/right side of the previous SQL with intersect/union/except keyword if SQL is \"-\".",
    "EditFromTable(oldTable, newTable): Replace oldTable with newTable in the FROM clause. Add newTable into the FROM clause if oldTable is \"-\". Delete oldTable from the FROM clause if newTable is \"-\".",
    "EditJoinCondition(oldCondition, newCondition): Replace oldCondition with newCondition in the ON clause. Add newCondition into the ON clause if oldCondition is \"-\". Delete oldCondition from the ON clause if newCondition is \"-\".",
    "EditJoinLogicalOperator(and/or): Edit the logical operator in the ON clause.",
    "EditNestedFromClause(SQL): Edit the nested FROM clause with SQL. Delete the nested FROM clause if SQL is \"-\".",
    "EditSelectItem(oldItem, newItem): Replace oldItem with newItem in the SELECT clause. Add newItem into the SELECT clause if oldItem is \"-\". Delete oldItem from the SELECT clause if newItem is \"-\".",
    "EditWhereCondition(oldCondition, newCondition): Replace oldCondition with newCondition in the WHERE clause. Add newCondition into the WHERE clause if oldCondition is \"-\". Delete oldCondition from the WHERE clause if newCondition is \"-\".",
    "EditWhereLogicalOperator(and/or): Edit the logical operator in the WHERE clause.",
    "EditGroupByColumn(oldColumn, newColumn): Replace oldColumn with newColumn in the GROUP BY clause. Add newColumn into the GROUP BY clause if oldColumn is \"-\". Delete oldColumn from the GROUP BY clause if newColumn is \"-\".",
    "EditHavingCondition(oldCondition, newCondition): Replace oldCondition with newCondition in the HAVING clause. Add newCondition into the HAVING clause if oldCondition is \"-\". Delete oldCondition from the HAVING clause if newCondition is \"-\".",
    "EditHavingLogicalOperator(and/or): Edit the logical operator in the HAVING clause.",
    "EditOrderByItem(oldItem, newItem): Replace oldItem with newItem in the ORDER BY clause. Add newItem into the ORDER BY clause if oldItem is \"-\". Delete oldItem from the ORDER BY clause if newItem is \"-\".",
    "EditOrder(asc/desc): Edit the order in the ORDER BY clause.",
    "EditLimit(oldLimit, newLimit): Replace oldLimit with newLimit in the LIMIT clause. Add newLimit into the LIMIT clause if oldLimit is \"-\". Delete oldLimit from the LIMIT clause if newLimit is \"-\".",
];

/// The numbered catalog of the fourteen rules shown to the model.
pub fn rule_catalog_text() -> String {
    let mut out = String::from("You can use following operations to edit SQL:");
    for (i, line) in RULE_LINES.iter().enumerate() {
        out.push_str(&format!("\n{}. {line}", i + 1));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("cannot read edit chain at line {line}: {message}")]
pub struct RenderParseError {
    /// 1-based line number; 0 when the whole text is unusable.
    pub line: usize,
    pub message: String,
}

impl RenderParseError {
    fn new(line: usize, message: impl Into<String>) -> Self {
        RenderParseError {
            line,
            message: message.into(),
        }
    }
}

/// Lists whose edits all share the add/delete/change shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ListKind {
    Select,
    Table,
    Join,
    Where,
    GroupBy,
    Having,
    OrderBy,
}

impl ListKind {
    fn of(edit: &UnitEdit) -> Option<(ListKind, Option<String>, Option<String>)> {
        let pred = |p: &Option<Predicate>| p.as_ref().map(predicate_text);
        Some(match edit {
            UnitEdit::SelectItem { old, new } => {
                let t = |e: &Option<SelectEntry>| {
                    e.as_ref().map(|e| select_entry_text(e.distinct, &e.expr))
                };
                (ListKind::Select, t(old), t(new))
            }
            UnitEdit::FromTable { old, new } => (
                ListKind::Table,
                old.as_ref().map(|t| t.to_string()),
                new.as_ref().map(|t| t.to_string()),
            ),
            UnitEdit::JoinCondition { old, new } => (ListKind::Join, pred(old), pred(new)),
            UnitEdit::WhereCondition { old, new } => (ListKind::Where, pred(old), pred(new)),
            UnitEdit::HavingCondition { old, new } => (ListKind::Having, pred(old), pred(new)),
            UnitEdit::GroupByColumn { old, new } => (
                ListKind::GroupBy,
                old.as_ref().map(column_text),
                new.as_ref().map(column_text),
            ),
            UnitEdit::OrderByItem { old, new } => (
                ListKind::OrderBy,
                old.as_ref().map(value_text),
                new.as_ref().map(value_text),
            ),
            _ => return None,
        })
    }

    /// Word placed before the item in phrases, e.g. `WHERE condition`.
    fn noun(self) -> &'static str {
        match self {
            ListKind::Select | ListKind::OrderBy => "",
            ListKind::Table => "table ",
            ListKind::Join => "JOIN condition ",
            ListKind::Where => "WHERE condition ",
            ListKind::GroupBy => "column ",
            ListKind::Having => "HAVING condition ",
        }
    }

    fn code_path(self) -> &'static str {
        match self {
            ListKind::Select => "sql['select']",
            ListKind::Table => "sql['from']['tables']",
            ListKind::Join => "sql['from']['conditions']",
            ListKind::Where => "sql['where']['conditions']",
            ListKind::GroupBy => "sql['group_by']",
            ListKind::Having => "sql['having']['conditions']",
            ListKind::OrderBy => "sql['order_by']['columns']",
        }
    }

    fn from_code_path(keys: &[String]) -> Option<ListKind> {
        let k: Vec<&str> = keys.iter().map(String::as_str).collect();
        Some(match k.as_slice() {
            ["select"] => ListKind::Select,
            ["from", "tables"] => ListKind::Table,
            ["from", "conditions"] => ListKind::Join,
            ["where", "conditions"] => ListKind::Where,
            ["group_by"] => ListKind::GroupBy,
            ["having", "conditions"] => ListKind::Having,
            ["order_by", "columns"] => ListKind::OrderBy,
            _ => return None,
        })
    }

    fn build(
        self,
        ctx: &Ctx<'_>,
        old: Option<&str>,
        new: Option<&str>,
    ) -> Result<UnitEdit, String> {
        if old.is_none() && new.is_none() {
            return Err("both sides are \"-\"".into());
        }
        Ok(match self {
            ListKind::Select => UnitEdit::SelectItem {
                old: old.map(|s| ctx.select_entry(s)).transpose()?,
                new: new.map(|s| ctx.select_entry(s)).transpose()?,
            },
            ListKind::Table => UnitEdit::FromTable {
                old: old.map(|s| ctx.table(s)).transpose()?,
                new: new.map(|s| ctx.table(s)).transpose()?,
            },
            ListKind::Join => UnitEdit::JoinCondition {
                old: old.map(|s| ctx.predicate(s)).transpose()?,
                new: new.map(|s| ctx.predicate(s)).transpose()?,
            },
            ListKind::Where => UnitEdit::WhereCondition {
                old: old.map(|s| ctx.predicate(s)).transpose()?,
                new: new.map(|s| ctx.predicate(s)).transpose()?,
            },
            ListKind::Having => UnitEdit::HavingCondition {
                old: old.map(|s| ctx.predicate(s)).transpose()?,
                new: new.map(|s| ctx.predicate(s)).transpose()?,
            },
            ListKind::GroupBy => UnitEdit::GroupByColumn {
                old: old.map(|s| ctx.column(s)).transpose()?,
                new: new.map(|s| ctx.column(s)).transpose()?,
            },
            ListKind::OrderBy => UnitEdit::OrderByItem {
                old: old.map(|s| ctx.value(s)).transpose()?,
                new: new.map(|s| ctx.value(s)).transpose()?,
            },
        })
    }
}

fn op_word(op: LogicalOp) -> &'static str {
    match op {
        LogicalOp::And => "and",
        LogicalOp::Or => "or",
    }
}

fn dir_word(d: OrderDirection) -> &'static str {
    match d {
        OrderDirection::Asc => "asc",
        OrderDirection::Desc => "desc",
    }
}

fn dash(s: Option<String>) -> String {
    s.unwrap_or_else(|| "-".to_string())
}

fn rule_call(edit: &UnitEdit) -> String {
    let args: Vec<String> = if let Some((_, old, new)) = ListKind::of(edit) {
        vec![dash(old), dash(new)]
    } else {
        match edit {
            UnitEdit::Iue { op, side, sql } => vec![
                op.keyword().to_ascii_lowercase(),
                side.keyword().to_string(),
                dash(sql.as_deref().map(unparse_qualified)),
            ],
            UnitEdit::JoinLogicalOperator(op)
            | UnitEdit::WhereLogicalOperator(op)
            | UnitEdit::HavingLogicalOperator(op) => vec![op_word(*op).to_string()],
            UnitEdit::NestedFromClause(sql) => vec![dash(sql.as_deref().map(unparse_qualified))],
            UnitEdit::Order(d) => vec![dir_word(*d).to_string()],
            UnitEdit::Limit { old, new } => vec![
                dash(old.map(|n| n.to_string())),
                dash(new.map(|n| n.to_string())),
            ],
            _ => unreachable!("list edits handled above"),
        }
    };
    format!("{}({})", edit.tag().name(), args.join(", "))
}

/// The plain-English description of one edit, without the bullet.
pub fn edit_phrase(edit: &UnitEdit) -> String {
    if let Some((kind, old, new)) = ListKind::of(edit) {
        let noun = kind.noun();
        return match (old, new) {
            (None, Some(n)) => format!("add {noun}{n}"),
            (Some(o), None) => format!("delete {noun}{o}"),
            (Some(o), Some(n)) => format!("change {noun}{o} to {n}"),
            (None, None) => String::new(),
        };
    }
    match edit {
        UnitEdit::Iue { op, side, sql } => match sql {
            Some(q) => format!(
                "add {} on the {} side: {}",
                op.keyword(),
                side.keyword(),
                unparse_qualified(q)
            ),
            None => format!("delete the {} side of {}", side.keyword(), op.keyword()),
        },
        UnitEdit::JoinLogicalOperator(op) => {
            format!("change JOIN logical operator to {}", op.keyword())
        }
        UnitEdit::WhereLogicalOperator(op) => {
            format!("change WHERE logical operator to {}", op.keyword())
        }
        UnitEdit::HavingLogicalOperator(op) => {
            format!("change HAVING logical operator to {}", op.keyword())
        }
        UnitEdit::NestedFromClause(Some(q)) => {
            format!("change nested FROM clause to {}", unparse_qualified(q))
        }
        UnitEdit::NestedFromClause(None) => "delete nested FROM clause".to_string(),
        UnitEdit::Order(d) => format!("change order to {}", d.keyword()),
        UnitEdit::Limit { old, new } => match (old, new) {
            (None, Some(n)) => format!("add LIMIT {n}"),
            (Some(o), None) => format!("delete LIMIT {o}"),
            (Some(o), Some(n)) => format!("change LIMIT {o} to {n}"),
            (None, None) => String::new(),
        },
        _ => unreachable!("list edits handled above"),
    }
}

fn py_quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn code_lines(edit: &UnitEdit) -> Vec<String> {
    if let Some((kind, old, new)) = ListKind::of(edit) {
        let path = kind.code_path();
        let mut out = Vec::new();
        if let Some(o) = old {
            out.push(format!("{path}.remove({})", py_quote(&o)));
        }
        if let Some(n) = new {
            out.push(format!("{path}.append({})", py_quote(&n)));
        }
        return out;
    }
    let line = match edit {
        UnitEdit::Iue { op, side, sql } => format!(
            "sql['set_op'] = {{'operator': '{}', 'side': '{}', 'sql': {}}}",
            op.keyword(),
            side.keyword(),
            sql.as_deref()
                .map(|q| py_quote(&unparse_qualified(q)))
                .unwrap_or_else(|| "None".into())
        ),
        UnitEdit::JoinLogicalOperator(op) => {
            format!("sql['from']['logical_operator'] = '{}'", op.keyword())
        }
        UnitEdit::WhereLogicalOperator(op) => {
            format!("sql['where']['logical_operator'] = '{}'", op.keyword())
        }
        UnitEdit::HavingLogicalOperator(op) => {
            format!("sql['having']['logical_operator'] = '{}'", op.keyword())
        }
        UnitEdit::NestedFromClause(sql) => format!(
            "sql['from']['nested'] = {}",
            sql.as_deref()
                .map(|q| py_quote(&unparse_qualified(q)))
                .unwrap_or_else(|| "None".into())
        ),
        UnitEdit::Order(d) => format!("sql['order_by']['order'] = '{}'", d.keyword()),
        UnitEdit::Limit { old, new } => match (old, new) {
            (None, Some(n)) => format!("sql['limit'] = {n}"),
            (Some(o), Some(n)) => format!("if sql['limit'] == {o}: sql['limit'] = {n}"),
            (Some(o), None) => format!("if sql['limit'] == {o}: del sql['limit']"),
            (None, None) => String::new(),
        },
        _ => unreachable!("list edits handled above"),
    };
    vec![line]
}

/// Renders the chain's edits. Direct chains render as the empty string.
pub fn render_chain(chain: &EditChain, style: ChainStyle, include_no_change: bool) -> String {
    if chain.direct {
        return String::new();
    }
    if style == ChainStyle::Code {
        let lines: Vec<String> = chain.edits.iter().flat_map(code_lines).collect();
        return if lines.is_empty() {
            "pass".to_string()
        } else {
            lines.join("\n")
        };
    }
    let mut lines: Vec<String> = Vec::new();
    for heading in Heading::ALL {
        let items: Vec<String> = chain
            .edits
            .iter()
            .filter(|e| e.heading() == heading)
            .map(|e| match style {
                ChainStyle::EditRule => format!("- {}", rule_call(e)),
                _ => format!("- {}", edit_phrase(e)),
            })
            .collect();
        if items.is_empty() && !include_no_change {
            continue;
        }
        lines.push(heading.title().to_string());
        if items.is_empty() {
            lines.push(NO_CHANGE.to_string());
        } else {
            lines.extend(items);
        }
    }
    lines.join("\n")
}

/// Reads a rendered chain back. Names are resolved against `catalog` when
/// given; otherwise fragments must be written with qualified columns.
pub fn parse_rendered_edits(
    text: &str,
    style: ChainStyle,
    catalog: Option<&SchemaCatalog>,
) -> Result<EditChain, RenderParseError> {
    parse_rendered_edits_detailed(text, style, catalog).map(|(c, _)| c)
}

/// Like [`parse_rendered_edits`], also returning a warning per skipped
/// unknown heading.
pub fn parse_rendered_edits_detailed(
    text: &str,
    style: ChainStyle,
    catalog: Option<&SchemaCatalog>,
) -> Result<(EditChain, Vec<String>), RenderParseError> {
    if text.trim().is_empty() {
        return Err(RenderParseError::new(0, "empty edit chain text"));
    }
    let ctx = Ctx { catalog };
    match style {
        ChainStyle::Code => {
            parse_code(text, &ctx).map(|edits| (EditChain::edited(None, edits), Vec::new()))
        }
        _ => parse_sections(text, style, &ctx),
    }
}

struct Ctx<'a> {
    catalog: Option<&'a SchemaCatalog>,
}

impl Ctx<'_> {
    fn opts(&self) -> ParseOptions<'_> {
        ParseOptions {
            catalog: self.catalog,
            lenient: true,
            normalize: true,
        }
    }

    fn select_entry(&self, s: &str) -> Result<SelectEntry, String> {
        parse_select_entry(s.trim(), self.opts())
            .map(|(distinct, expr)| SelectEntry { distinct, expr })
            .map_err(|e| e.to_string())
    }

    fn predicate(&self, s: &str) -> Result<Predicate, String> {
        parse_predicate(s.trim(), self.opts()).map_err(|e| e.to_string())
    }

    fn column(&self, s: &str) -> Result<ColumnRef, String> {
        parse_column(s.trim(), self.opts()).map_err(|e| e.to_string())
    }

    fn value(&self, s: &str) -> Result<ValueExpr, String> {
        parse_value_expr(s.trim(), self.opts()).map_err(|e| e.to_string())
    }

    fn table(&self, s: &str) -> Result<Ident, String> {
        let s = s.trim();
        if s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(format!("`{s}` is not a table name"));
        }
        match self.catalog {
            Some(cat) => cat
                .table(s)
                .map(|t| t.name.clone())
                .ok_or_else(|| format!("unknown table `{s}`")),
            None => Ok(Ident::new(s)),
        }
    }

    fn sql(&self, s: &str) -> Result<SqlAst, String> {
        parse_with(s.trim(), self.opts()).map_err(|e| e.to_string())
    }
}

fn heading_of(line: &str) -> Option<Heading> {
    Heading::ALL
        .into_iter()
        .find(|h| h.title().eq_ignore_ascii_case(line))
}

fn parse_sections(
    text: &str,
    style: ChainStyle,
    ctx: &Ctx<'_>,
) -> Result<(EditChain, Vec<String>), RenderParseError> {
    let mut edits = Vec::new();
    let mut warnings = Vec::new();
    let mut heading: Option<Heading> = None;
    let mut skipping = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = heading_of(line) {
            heading = Some(h);
            skipping = false;
            continue;
        }
        if !line.starts_with('-') && line.ends_with(':') {
            warnings.push(format!("line {lineno}: unknown heading `{line}` skipped"));
            skipping = true;
            continue;
        }
        if skipping {
            continue;
        }
        let body = line.strip_prefix('-').unwrap_or(line).trim();
        if body.eq_ignore_ascii_case("no change is needed") {
            continue;
        }
        let edit = match style {
            ChainStyle::EditRule => parse_rule_call(body, ctx),
            _ => parse_phrase(body, heading, ctx),
        }
        .map_err(|m| RenderParseError::new(lineno, m))?;
        edits.push(edit);
    }
    Ok((EditChain::edited(None, edits), warnings))
}

/// Splits `s` at top-level commas (outside parentheses and quotes), making
/// at most `max` pieces.
fn split_args(s: &str, max: usize) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => match c {
                '\'' | '"' | '`' => quote = Some(c),
                '(' => depth += 1,
                ')' => depth -= 1,
                ',' if depth == 0 && out.len() + 1 < max => {
                    out.push(&s[start..i]);
                    start = i + 1;
                }
                _ => {}
            },
        }
    }
    out.push(&s[start..]);
    out
}

fn dashed(s: &str) -> Option<&str> {
    let t = s.trim();
    if t == "-" || t.is_empty() {
        None
    } else {
        Some(t)
    }
}

fn logical(s: &str) -> Result<LogicalOp, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "and" => Ok(LogicalOp::And),
        "or" => Ok(LogicalOp::Or),
        other => Err(format!("expected and/or, found `{other}`")),
    }
}

fn direction(s: &str) -> Result<OrderDirection, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "asc" => Ok(OrderDirection::Asc),
        "desc" => Ok(OrderDirection::Desc),
        other => Err(format!("expected asc/desc, found `{other}`")),
    }
}

fn limit_value(s: &str) -> Result<u64, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("`{}` is not a LIMIT value", s.trim()))
}

fn set_operator(s: &str) -> Result<SetOperator, String> {
    SetOperator::from_keyword(s.trim())
        .ok_or_else(|| format!("`{}` is not INTERSECT/UNION/EXCEPT", s.trim()))
}

fn parse_rule_call(body: &str, ctx: &Ctx<'_>) -> Result<UnitEdit, String> {
    let open = body.find('(').ok_or("expected an edit rule call")?;
    let close = body
        .rfind(')')
        .filter(|&c| c > open)
        .ok_or("unclosed edit rule call")?;
    let name = body[..open].trim();
    let args = &body[open + 1..close];
    let tag = RuleTag::from_name(name).ok_or_else(|| format!("unknown edit rule `{name}`"))?;
    let two = || -> Result<(Option<&str>, Option<&str>), String> {
        let parts = split_args(args, 2);
        if parts.len() != 2 {
            return Err(format!("{name} takes two arguments"));
        }
        Ok((dashed(parts[0]), dashed(parts[1])))
    };
    let list = |kind: ListKind| -> Result<UnitEdit, String> {
        let (o, n) = two()?;
        kind.build(ctx, o, n)
    };
    match tag {
        RuleTag::SelectItem => list(ListKind::Select),
        RuleTag::FromTable => list(ListKind::Table),
        RuleTag::JoinCondition => list(ListKind::Join),
        RuleTag::WhereCondition => list(ListKind::Where),
        RuleTag::GroupByColumn => list(ListKind::GroupBy),
        RuleTag::HavingCondition => list(ListKind::Having),
        RuleTag::OrderByItem => list(ListKind::OrderBy),
        RuleTag::JoinLogicalOperator => Ok(UnitEdit::JoinLogicalOperator(logical(args)?)),
        RuleTag::WhereLogicalOperator => Ok(UnitEdit::WhereLogicalOperator(logical(args)?)),
        RuleTag::HavingLogicalOperator => Ok(UnitEdit::HavingLogicalOperator(logical(args)?)),
        RuleTag::Order => Ok(UnitEdit::Order(direction(args)?)),
        RuleTag::NestedFromClause => Ok(UnitEdit::NestedFromClause(
            dashed(args).map(|s| ctx.sql(s)).transpose()?.map(Box::new),
        )),
        RuleTag::Limit => {
            let (o, n) = two()?;
            if o.is_none() && n.is_none() {
                return Err("both sides are \"-\"".into());
            }
            Ok(UnitEdit::Limit {
                old: o.map(limit_value).transpose()?,
                new: n.map(limit_value).transpose()?,
            })
        }
        RuleTag::Iue => {
            let parts = split_args(args, 3);
            if parts.len() != 3 {
                return Err("EditIUE takes three arguments".into());
            }
            Ok(UnitEdit::Iue {
                op: set_operator(parts[0])?,
                side: Side::from_keyword(parts[1]).ok_or("expected left/right")?,
                sql: dashed(parts[2])
                    .map(|s| ctx.sql(s))
                    .transpose()?
                    .map(Box::new),
            })
        }
    }
}

fn strip_ci<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    if s.len() >= prefix.len()
        && s.is_char_boundary(prefix.len())
        && s[..prefix.len()].eq_ignore_ascii_case(prefix)
    {
        Some(&s[prefix.len()..])
    } else {
        None
    }
}

/// Parses `add X`, `delete X` or `change X to Y` after the noun prefix.
fn list_phrase(body: &str, kind: ListKind, ctx: &Ctx<'_>) -> Option<Result<UnitEdit, String>> {
    let noun = kind.noun();
    if let Some(rest) = strip_ci(body, &format!("add {noun}")) {
        return Some(kind.build(ctx, None, Some(rest)));
    }
    if let Some(rest) = strip_ci(body, &format!("delete {noun}")) {
        return Some(kind.build(ctx, Some(rest), None));
    }
    if let Some(rest) = strip_ci(body, &format!("change {noun}")) {
        let mut last_err = format!("expected `change {noun}X to Y`");
        for (i, _) in rest.match_indices(" to ") {
            match kind.build(ctx, Some(&rest[..i]), Some(&rest[i + 4..])) {
                Ok(e) => return Some(Ok(e)),
                Err(e) => last_err = e,
            }
        }
        return Some(Err(last_err));
    }
    None
}

fn parse_phrase(body: &str, heading: Option<Heading>, ctx: &Ctx<'_>) -> Result<UnitEdit, String> {
    // phrases that name their clause explicitly work under any heading
    for (prefix, make) in [
        (
            "change JOIN logical operator to ",
            UnitEdit::JoinLogicalOperator as fn(LogicalOp) -> UnitEdit,
        ),
        (
            "change WHERE logical operator to ",
            UnitEdit::WhereLogicalOperator,
        ),
        (
            "change HAVING logical operator to ",
            UnitEdit::HavingLogicalOperator,
        ),
    ] {
        if let Some(rest) = strip_ci(body, prefix) {
            return Ok(make(logical(rest)?));
        }
    }
    if let Some(rest) = strip_ci(body, "change order to ") {
        return Ok(UnitEdit::Order(direction(rest)?));
    }
    if let Some(rest) = strip_ci(body, "change nested FROM clause to ") {
        return Ok(UnitEdit::NestedFromClause(Some(Box::new(ctx.sql(rest)?))));
    }
    if body.eq_ignore_ascii_case("delete nested FROM clause") {
        return Ok(UnitEdit::NestedFromClause(None));
    }
    if let Some(rest) = strip_ci(body, "add LIMIT ") {
        return Ok(UnitEdit::Limit {
            old: None,
            new: Some(limit_value(rest)?),
        });
    }
    if let Some(rest) = strip_ci(body, "delete LIMIT ") {
        return Ok(UnitEdit::Limit {
            old: Some(limit_value(rest)?),
            new: None,
        });
    }
    if let Some(rest) = strip_ci(body, "change LIMIT ") {
        let (o, n) = rest
            .split_once(" to ")
            .ok_or("expected `change LIMIT X to Y`")?;
        return Ok(UnitEdit::Limit {
            old: Some(limit_value(o)?),
            new: Some(limit_value(n)?),
        });
    }
    if let Some(rest) = strip_ci(body, "delete the ") {
        let (side, op) = rest
            .split_once(" side of ")
            .ok_or("expected `delete the <side> side of <op>`")?;
        return Ok(UnitEdit::Iue {
            op: set_operator(op)?,
            side: Side::from_keyword(side).ok_or("expected left/right")?,
            sql: None,
        });
    }
    if let Some(rest) = strip_ci(body, "add ") {
        if let Some((op, tail)) = rest.split_once(" on the ") {
            if let Ok(op) = set_operator(op) {
                let (side, sql) = tail
                    .split_once(" side: ")
                    .ok_or("expected `<side> side: SQL`")?;
                return Ok(UnitEdit::Iue {
                    op,
                    side: Side::from_keyword(side).ok_or("expected left/right")?,
                    sql: Some(Box::new(ctx.sql(sql)?)),
                });
            }
        }
    }
    for kind in [
        ListKind::Table,
        ListKind::Join,
        ListKind::Where,
        ListKind::Having,
        ListKind::GroupBy,
    ] {
        if let Some(r) = list_phrase(body, kind, ctx) {
            return r;
        }
    }
    let kind = match heading {
        Some(Heading::Select) => ListKind::Select,
        Some(Heading::OrderBy) => ListKind::OrderBy,
        Some(h) => return Err(format!("unrecognised edit under `{}`: `{body}`", h.title())),
        None => return Err(format!("edit `{body}` appears before any clause heading")),
    };
    list_phrase(body, kind, ctx).unwrap_or_else(|| Err(format!("unrecognised edit `{body}`")))
}

static LIST_STMT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^sql((?:\[\s*'[a-z_]+'\s*\])+)\.(append|remove)\((.*)\)\s*;?$")
        .expect("valid regex")
});
static ASSIGN_STMT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^sql((?:\[\s*'[a-z_]+'\s*\])+)\s*=\s*(.*?)\s*;?$").expect("valid regex")
});
static LIMIT_IF: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^if\s+sql\['limit'\]\s*==\s*(\d+)\s*:\s*(?:sql\['limit'\]\s*=\s*(\d+)|del\s+sql\['limit'\])\s*;?$")
        .expect("valid regex")
});
static KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"'([a-z_]+)'").expect("valid regex"));

fn path_keys(path: &str) -> Vec<String> {
    KEY.captures_iter(path).map(|c| c[1].to_string()).collect()
}

/// Reads a Python string literal, returning the value and the rest.
fn py_string(s: &str) -> Option<(String, &str)> {
    let s = s.trim_start();
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let mut out = String::new();
    let mut chars = s[1..].char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => out.push(chars.next()?.1),
            c if c == quote => return Some((out, &s[1 + i + 1..])),
            c => out.push(c),
        }
    }
    None
}

/// A string literal or `None`.
fn py_opt_string(s: &str) -> Option<(Option<String>, &str)> {
    let t = s.trim_start();
    if let Some(rest) = t.strip_prefix("None") {
        return Some((None, rest));
    }
    py_string(t).map(|(v, r)| (Some(v), r))
}

/// Parses `{'k': 'v', 'k2': None}`.
fn py_dict(s: &str) -> Option<Vec<(String, Option<String>)>> {
    let mut rest = s.trim().strip_prefix('{')?;
    let mut out = Vec::new();
    loop {
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix('}') {
            return r.trim().is_empty().then_some(out);
        }
        let (k, r) = py_string(rest)?;
        let r = r.trim_start().strip_prefix(':')?;
        let (v, r) = py_opt_string(r)?;
        out.push((k, v));
        rest = r.trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r;
        }
    }
}

fn parse_code(text: &str, ctx: &Ctx<'_>) -> Result<Vec<UnitEdit>, RenderParseError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#') && *l != "pass")
        .collect();
    let mut edits = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (lineno, line) = lines[i];
        let err = |m: String| RenderParseError::new(lineno, m);
        i += 1;
        if let Some(c) = LIST_STMT.captures(line) {
            let keys = path_keys(&c[1]);
            let kind = ListKind::from_code_path(&keys)
                .ok_or_else(|| err(format!("unknown list `{}`", &c[1])))?;
            let (value, tail) =
                py_string(&c[3]).ok_or_else(|| err("expected a quoted value".into()))?;
            if !tail.trim().is_empty() {
                return Err(err("trailing text after value".into()));
            }
            let edit = if &c[2] == "append" {
                kind.build(ctx, None, Some(&value))
            } else {
                // remove directly followed by append on the same list is a change
                let next_append = lines
                    .get(i)
                    .and_then(|(_, l)| LIST_STMT.captures(l))
                    .and_then(|n| {
                        (&n[2] == "append" && path_keys(&n[1]) == keys)
                            .then(|| py_string(&n[3]).map(|(v, _)| v))
                            .flatten()
                    });
                match next_append {
                    Some(new) => {
                        i += 1;
                        kind.build(ctx, Some(&value), Some(&new))
                    }
                    None => kind.build(ctx, Some(&value), None),
                }
            }
            .map_err(err)?;
            edits.push(edit);
        } else if let Some(c) = LIMIT_IF.captures(line) {
            let old = limit_value(&c[1]).map_err(err)?;
            let new = c
                .get(2)
                .map(|m| limit_value(m.as_str()))
                .transpose()
                .map_err(err)?;
            edits.push(UnitEdit::Limit {
                old: Some(old),
                new,
            });
        } else if let Some(c) = ASSIGN_STMT.captures(line) {
            let keys = path_keys(&c[1]);
            let value = &c[2];
            let k: Vec<&str> = keys.iter().map(String::as_str).collect();
            let string_value = || {
                py_string(value)
                    .map(|(v, _)| v)
                    .ok_or_else(|| err("expected a quoted value".into()))
            };
            let edit = match k.as_slice() {
                ["from", "logical_operator"] => {
                    UnitEdit::JoinLogicalOperator(logical(&string_value()?).map_err(err)?)
                }
                ["where", "logical_operator"] => {
                    UnitEdit::WhereLogicalOperator(logical(&string_value()?).map_err(err)?)
                }
                ["having", "logical_operator"] => {
                    UnitEdit::HavingLogicalOperator(logical(&string_value()?).map_err(err)?)
                }
                ["order_by", "order"] => UnitEdit::Order(direction(&string_value()?).map_err(err)?),
                ["limit"] => UnitEdit::Limit {
                    old: None,
                    new: Some(limit_value(value).map_err(err)?),
                },
                ["from", "nested"] => {
                    let (v, _) = py_opt_string(value)
                        .ok_or_else(|| err("expected a quoted SQL or None".into()))?;
                    UnitEdit::NestedFromClause(
                        v.map(|s| ctx.sql(&s))
                            .transpose()
                            .map_err(err)?
                            .map(Box::new),
                    )
                }
                ["set_op"] => {
                    let d = py_dict(value)
                        .ok_or_else(|| err("expected a set operation dict".into()))?;
                    let get = |k: &str| d.iter().find(|(key, _)| key == k).map(|(_, v)| v.clone());
                    let op = get("operator")
                        .flatten()
                        .ok_or_else(|| err("missing operator".into()))?;
                    let side = get("side").flatten().unwrap_or_else(|| "right".into());
                    let sql = get("sql").ok_or_else(|| err("missing sql".into()))?;
                    UnitEdit::Iue {
                        op: set_operator(&op).map_err(err)?,
                        side: Side::from_keyword(&side)
                            .ok_or_else(|| err("expected left/right".into()))?,
                        sql: sql
                            .map(|s| ctx.sql(&s))
                            .transpose()
                            .map_err(err)?
                            .map(Box::new),
                    }
                }
                _ => return Err(err(format!("unknown assignment target `{}`", &c[1]))),
            };
            edits.push(edit);
        } else {
            return Err(err(format!("unrecognised statement `{line}`")));
        }
    }
    Ok(edits)
}
