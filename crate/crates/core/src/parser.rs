//! Recursive-descent parser for the Spider SQL subset.
//!
//! Parsing happens per query level: the SELECT list is read before the FROM
//! clause is known, so column references are first collected with their
//! qualifiers as written and resolved once the level's FROM scope exists.
//! Nested subqueries are parsed (and resolved) against the enclosing scopes
//! at the point they appear.

use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::lexer::{tokenize, Token, TokenKind};
use crate::normalize::normalize;
use crate::schema::SchemaCatalog;

#[derive(Clone, Debug, PartialEq, Error)]
pub struct SyntaxError {
    /// Byte offset of the offending token.
    pub pos: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl SyntaxError {
    pub(crate) fn new(pos: usize, message: impl Into<String>, expected: &[&str]) -> Self {
        SyntaxError {
            pos,
            message: message.into(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at byte {}: {}", self.pos, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected {})", self.expected.join(" or "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("resolution error: {0}")]
pub struct ResolutionError(pub String);

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Resolution(#[from] ResolutionError),
}

/// How names are resolved.
///
/// With a catalog every table and column must exist and takes the catalog's
/// spelling. Without one, qualified names are taken as written and an
/// unqualified column is attributed to the only table in scope. `lenient`
/// leaves names that cannot be attributed unqualified instead of failing.
#[derive(Clone, Copy, Debug)]
pub struct ParseOptions<'a> {
    pub catalog: Option<&'a SchemaCatalog>,
    pub lenient: bool,
    pub normalize: bool,
}

impl<'a> ParseOptions<'a> {
    pub fn with_catalog(catalog: &'a SchemaCatalog) -> Self {
        ParseOptions {
            catalog: Some(catalog),
            lenient: false,
            normalize: true,
        }
    }

    pub fn without_catalog() -> Self {
        ParseOptions {
            catalog: None,
            lenient: false,
            normalize: true,
        }
    }

    pub fn lenient() -> Self {
        ParseOptions {
            catalog: None,
            lenient: true,
            normalize: true,
        }
    }

    pub fn maybe_catalog(catalog: Option<&'a SchemaCatalog>) -> Self {
        ParseOptions {
            catalog,
            lenient: false,
            normalize: true,
        }
    }
}

/// Parses one statement against `catalog` and returns its normalized tree.
pub fn parse(sql: &str, catalog: &SchemaCatalog) -> Result<SqlAst, ParseError> {
    parse_with(sql, ParseOptions::with_catalog(catalog))
}

pub fn parse_with(sql: &str, opts: ParseOptions<'_>) -> Result<SqlAst, ParseError> {
    let mut p = Parser::new(sql, opts)?;
    let ast = p.query(&[])?;
    p.eat(&TokenKind::Semicolon);
    p.expect_end()?;
    Ok(if opts.normalize { normalize(&ast) } else { ast })
}

/// Parses a select-list entry such as `DISTINCT t.a` or `COUNT(*)`.
pub fn parse_select_entry(
    text: &str,
    opts: ParseOptions<'_>,
) -> Result<(bool, ValueExpr), ParseError> {
    let mut p = Parser::new(text, opts)?;
    let distinct = p.eat_kw("DISTINCT");
    let v = p.value_expr()?;
    p.expect_end()?;
    let v = p.resolve_value(&v, &[])?;
    Ok((distinct, v))
}

pub fn parse_value_expr(text: &str, opts: ParseOptions<'_>) -> Result<ValueExpr, ParseError> {
    let mut p = Parser::new(text, opts)?;
    let v = p.value_expr()?;
    p.expect_end()?;
    Ok(p.resolve_value(&v, &[])?)
}

pub fn parse_column(text: &str, opts: ParseOptions<'_>) -> Result<ColumnRef, ParseError> {
    let mut p = Parser::new(text, opts)?;
    let c = p.column_ref()?;
    p.expect_end()?;
    Ok(p.resolve_column(&c, &[])?)
}

pub fn parse_predicate(text: &str, opts: ParseOptions<'_>) -> Result<Predicate, ParseError> {
    let mut p = Parser::new(text, opts)?;
    let pred = p.predicate(&[])?;
    p.expect_end()?;
    let pred = p.resolve_predicate(&pred, &[])?;
    Ok(if opts.normalize {
        crate::normalize::normalize_predicate(&pred)
    } else {
        pred
    })
}

const RESERVED: &[&str] = &[
    "SELECT",
    "FROM",
    "WHERE",
    "GROUP",
    "BY",
    "HAVING",
    "ORDER",
    "LIMIT",
    "INTERSECT",
    "UNION",
    "EXCEPT",
    "JOIN",
    "ON",
    "AS",
    "AND",
    "OR",
    "NOT",
    "IN",
    "LIKE",
    "BETWEEN",
    "IS",
    "NULL",
    "ASC",
    "DESC",
    "DISTINCT",
    "INNER",
    "LEFT",
    "RIGHT",
    "OUTER",
    "CROSS",
    "EXISTS",
    "ALL",
    "OFFSET",
];

fn is_reserved(w: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(w))
}

#[derive(Default, Debug, Clone)]
struct Scope {
    /// (canonical table, alias as written)
    tables: Vec<(Ident, Option<String>)>,
    subquery: bool,
    subquery_alias: Option<String>,
    select_aliases: Vec<(String, ValueExpr)>,
}

struct Parser<'a> {
    tokens: Vec<Token>,
    idx: usize,
    end: usize,
    opts: ParseOptions<'a>,
}

impl<'a> Parser<'a> {
    fn new(src: &str, opts: ParseOptions<'a>) -> Result<Self, SyntaxError> {
        Ok(Parser {
            tokens: tokenize(src)?,
            idx: 0,
            end: src.len(),
            opts,
        })
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.idx).map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&TokenKind> {
        self.tokens.get(self.idx + n).map(|t| &t.kind)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map(|t| t.pos).unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<TokenKind> {
        let t = self.tokens.get(self.idx).map(|t| t.kind.clone());
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(k) => format!("found {k}"),
            None => "found end of input".to_string(),
        }
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError::new(self.pos(), self.found(), expected)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn at_kw_n(&self, n: usize, kw: &str) -> bool {
        matches!(self.peek_at(n), Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&[kw]))
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), SyntaxError> {
        if self.eat(&kind) {
            Ok(())
        } else {
            Err(self.error(&[&kind.to_string()]))
        }
    }

    fn expect_end(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            None => Ok(()),
            Some(_) => Err(self.error(&["end of input"])),
        }
    }

    fn name(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(TokenKind::Word(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.idx += 1;
                Ok(w)
            }
            _ => Err(self.error(&[what])),
        }
    }

    // ---- queries ---------------------------------------------------------

    fn query(&mut self, outer: &[Scope]) -> Result<SqlAst, ParseError> {
        self.expect_kw("SELECT")?;
        let distinct = self.eat_kw("DISTINCT");
        let mut scope = Scope::default();
        let mut items = Vec::new();
        loop {
            let item = self.value_expr()?;
            if self.eat_kw("AS") {
                let alias = self.name("column alias")?;
                scope.select_aliases.push((alias, item.clone()));
            }
            items.push(item);
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        self.expect_kw("FROM")?;
        let (from_tables, from_sub, join) = self.parse_from(outer, &mut scope)?;

        let mut scopes: Vec<Scope> = outer.to_vec();
        scopes.push(scope);

        let where_clause = if self.eat_kw("WHERE") {
            Some(self.condition_tree(&scopes)?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.at_kw("GROUP") {
            self.idx += 1;
            self.expect_kw("BY")?;
            loop {
                group_by.push(self.column_ref()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        let having = if self.eat_kw("HAVING") {
            Some(self.condition_tree(&scopes)?)
        } else {
            None
        };
        let order_by = if self.at_kw("ORDER") {
            self.idx += 1;
            self.expect_kw("BY")?;
            Some(self.order_by()?)
        } else {
            None
        };
        let limit = if self.eat_kw("LIMIT") {
            match self.advance() {
                Some(TokenKind::Number(n)) => Some(n.parse::<u64>().map_err(|_| {
                    SyntaxError::new(
                        self.pos(),
                        format!("LIMIT needs a non-negative integer, found {n}"),
                        &["integer"],
                    )
                })?),
                _ => {
                    self.idx = self.idx.saturating_sub(1);
                    return Err(self.error(&["integer"]).into());
                }
            }
        } else {
            None
        };

        let raw = SqlAst {
            select: SelectClause { distinct, items },
            from: FromClause {
                tables: from_tables,
                subquery: from_sub,
                join,
            },
            where_clause,
            group_by,
            having,
            order_by,
            limit,
            set_op: None,
        };
        let mut ast = self.resolve_level(&raw, &scopes)?;

        if let Some(TokenKind::Word(w)) = self.peek() {
            if let Some(op) = SetOperator::from_keyword(w) {
                self.idx += 1;
                let rhs = self.query(outer)?;
                ast.set_op = Some(SetOp {
                    op,
                    rhs: Box::new(rhs),
                });
            }
        }
        Ok(ast)
    }

    #[allow(clippy::type_complexity)]
    fn parse_from(
        &mut self,
        outer: &[Scope],
        scope: &mut Scope,
    ) -> Result<(Vec<Ident>, Option<Box<SqlAst>>, Option<ConditionTree>), ParseError> {
        let mut tables = Vec::new();
        let mut sub = None;
        let mut ons: Vec<ConditionTree> = Vec::new();
        loop {
            if self.eat(&TokenKind::LParen) {
                if sub.is_some() {
                    return Err(SyntaxError::new(
                        self.pos(),
                        "only one FROM subquery is supported",
                        &[],
                    )
                    .into());
                }
                let q = self.query(outer)?;
                self.expect(TokenKind::RParen)?;
                let alias = self.table_alias()?;
                scope.subquery = true;
                scope.subquery_alias = alias;
                sub = Some(Box::new(q));
            } else {
                let pos = self.pos();
                let name = self.name("table name")?;
                let table = match self.opts.catalog {
                    Some(cat) => cat.table(&name).map(|t| t.name.clone()).ok_or_else(|| {
                        ResolutionError(format!("unknown table `{name}` at byte {pos}"))
                    })?,
                    None => Ident::new(name),
                };
                let alias = self.table_alias()?;
                scope.tables.push((table.clone(), alias));
                tables.push(table);
            }
            // ON is resolved after the whole FROM list is known
            if self.eat_kw("ON") {
                ons.push(self.condition_tree_raw(outer)?);
            }
            if self.eat(&TokenKind::Comma) {
                continue;
            }
            if self.at_kw("JOIN") {
                self.idx += 1;
                continue;
            }
            if (self.at_kw("INNER") || self.at_kw("CROSS")) && self.at_kw_n(1, "JOIN") {
                self.idx += 2;
                continue;
            }
            if self.at_kw("LEFT") || self.at_kw("RIGHT") || self.at_kw("OUTER") {
                return Err(SyntaxError::new(
                    self.pos(),
                    "outer joins are not supported",
                    &["JOIN"],
                )
                .into());
            }
            break;
        }
        let join = match ons.len() {
            0 => None,
            1 => ons.pop(),
            _ => {
                if ons
                    .iter()
                    .any(|t| t.op == LogicalOp::Or && t.conditions.len() > 1)
                {
                    return Err(SyntaxError::new(
                        self.pos(),
                        "mixed AND/OR in join conditions",
                        &[],
                    )
                    .into());
                }
                Some(ConditionTree {
                    conditions: ons.into_iter().flat_map(|t| t.conditions).collect(),
                    op: LogicalOp::And,
                })
            }
        };
        Ok((tables, sub, join))
    }

    fn table_alias(&mut self) -> Result<Option<String>, SyntaxError> {
        if self.eat_kw("AS") {
            return self.name("alias").map(Some);
        }
        match self.peek() {
            Some(TokenKind::Word(w)) if !is_reserved(w) => {
                let w = w.clone();
                self.idx += 1;
                Ok(Some(w))
            }
            _ => Ok(None),
        }
    }

    fn order_by(&mut self) -> Result<OrderBy, ParseError> {
        let mut items = Vec::new();
        let mut direction: Option<OrderDirection> = None;
        loop {
            let start = self.pos();
            items.push(self.value_expr()?);
            let dir = if self.eat_kw("ASC") {
                Some(OrderDirection::Asc)
            } else if self.eat_kw("DESC") {
                Some(OrderDirection::Desc)
            } else {
                None
            };
            match (direction, dir) {
                (Some(a), Some(b)) if a != b => {
                    return Err(SyntaxError::new(start, "mixed ORDER BY directions", &[]).into())
                }
                (None, Some(b)) => direction = Some(b),
                _ => {}
            }
            if !self.eat(&TokenKind::Comma) {
                break;
            }
        }
        Ok(OrderBy {
            items,
            direction: direction.unwrap_or_default(),
        })
    }

    // ---- conditions ------------------------------------------------------

    fn condition_tree(&mut self, scopes: &[Scope]) -> Result<ConditionTree, ParseError> {
        self.condition_tree_raw(scopes)
    }

    /// Conditions whose subqueries are resolved against `scopes`; the
    /// predicates' own columns stay raw until the level is resolved.
    fn condition_tree_raw(&mut self, scopes: &[Scope]) -> Result<ConditionTree, ParseError> {
        let mut conditions = vec![self.predicate(scopes)?];
        let mut op: Option<LogicalOp> = None;
        loop {
            let next = if self.at_kw("AND") {
                LogicalOp::And
            } else if self.at_kw("OR") {
                LogicalOp::Or
            } else {
                break;
            };
            if matches!(op, Some(o) if o != next) {
                return Err(SyntaxError::new(
                    self.pos(),
                    "mixed AND/OR in one condition clause",
                    &[],
                )
                .into());
            }
            op = Some(next);
            self.idx += 1;
            conditions.push(self.predicate(scopes)?);
        }
        Ok(ConditionTree {
            conditions,
            op: op.unwrap_or_default(),
        })
    }

    fn predicate(&mut self, scopes: &[Scope]) -> Result<Predicate, ParseError> {
        if self.at_kw("NOT") || self.at_kw("EXISTS") || self.peek() == Some(&TokenKind::LParen) {
            return Err(SyntaxError::new(
                self.pos(),
                "unsupported condition form (parenthesised groups, NOT prefix, EXISTS)",
                &["column"],
            )
            .into());
        }
        let lhs = self.value_expr()?;
        let mut negated = self.eat_kw("NOT");
        let op = match self.advance() {
            Some(TokenKind::Eq) => CompareOp::Eq,
            Some(TokenKind::Ne) => CompareOp::Ne,
            Some(TokenKind::Lt) => CompareOp::Lt,
            Some(TokenKind::Gt) => CompareOp::Gt,
            Some(TokenKind::Le) => CompareOp::Le,
            Some(TokenKind::Ge) => CompareOp::Ge,
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case("LIKE") => CompareOp::Like,
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case("IN") => CompareOp::In,
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case("BETWEEN") => CompareOp::Between,
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case("IS") && !negated => {
                negated = self.eat_kw("NOT");
                CompareOp::Is
            }
            _ => {
                self.idx = self.idx.saturating_sub(1);
                return Err(self
                    .error(&["comparison operator", "LIKE", "IN", "BETWEEN", "IS"])
                    .into());
            }
        };
        if negated
            && !matches!(
                op,
                CompareOp::Like | CompareOp::In | CompareOp::Between | CompareOp::Is
            )
        {
            return Err(SyntaxError::new(
                self.pos(),
                "NOT only applies to LIKE, IN, BETWEEN and IS",
                &[],
            )
            .into());
        }
        let rhs = self.operand(scopes, op == CompareOp::In)?;
        let rhs2 = if op == CompareOp::Between {
            self.expect_kw("AND")?;
            Some(self.operand(scopes, false)?)
        } else {
            None
        };
        Ok(Predicate {
            lhs,
            negated,
            op,
            rhs,
            rhs2,
        })
    }

    fn operand(&mut self, scopes: &[Scope], in_list: bool) -> Result<Operand, ParseError> {
        match self.peek().cloned() {
            Some(TokenKind::LParen) => {
                if self.at_kw_n(1, "SELECT") {
                    self.idx += 1;
                    let q = self.query(scopes)?;
                    self.expect(TokenKind::RParen)?;
                    Ok(Operand::Subquery(Box::new(q)))
                } else if in_list {
                    Err(SyntaxError::new(
                        self.pos(),
                        "IN lists of literals are not supported",
                        &["subquery"],
                    )
                    .into())
                } else {
                    Err(self.error(&["subquery"]).into())
                }
            }
            Some(TokenKind::Str { text, quote }) => {
                self.idx += 1;
                Ok(Operand::Literal(Literal {
                    text,
                    quote: Some(quote),
                }))
            }
            Some(TokenKind::Number(n)) => {
                self.idx += 1;
                Ok(Operand::Literal(Literal::number(n)))
            }
            Some(TokenKind::Minus) | Some(TokenKind::Plus) => {
                let sign = if self.peek() == Some(&TokenKind::Minus) {
                    "-"
                } else {
                    ""
                };
                self.idx += 1;
                match self.advance() {
                    Some(TokenKind::Number(n)) => {
                        Ok(Operand::Literal(Literal::number(format!("{sign}{n}"))))
                    }
                    _ => {
                        self.idx = self.idx.saturating_sub(1);
                        Err(self.error(&["number"]).into())
                    }
                }
            }
            Some(TokenKind::Word(w)) if w.eq_ignore_ascii_case("NULL") => {
                self.idx += 1;
                Ok(Operand::Literal(Literal::number("NULL")))
            }
            Some(TokenKind::Word(w))
                if w.eq_ignore_ascii_case("TRUE") || w.eq_ignore_ascii_case("FALSE") =>
            {
                self.idx += 1;
                Ok(Operand::Literal(Literal::number(w.to_ascii_uppercase())))
            }
            _ => Ok(Operand::Column(self.value_expr()?)),
        }
    }

    // ---- expressions -----------------------------------------------------

    fn value_expr(&mut self) -> Result<ValueExpr, ParseError> {
        let lhs = self.col_unit()?;
        let op = match self.peek() {
            Some(TokenKind::Plus) => Some(ArithOp::Add),
            Some(TokenKind::Minus) => Some(ArithOp::Sub),
            Some(TokenKind::Star) => Some(ArithOp::Mul),
            Some(TokenKind::Slash) => Some(ArithOp::Div),
            _ => None,
        };
        let rhs = match op {
            Some(op) => {
                self.idx += 1;
                Some((op, self.col_unit()?))
            }
            None => None,
        };
        Ok(ValueExpr { lhs, rhs })
    }

    fn col_unit(&mut self) -> Result<ColUnit, ParseError> {
        if let Some(TokenKind::Word(w)) = self.peek() {
            if let Some(agg) = Aggregate::from_keyword(w) {
                if self.peek_at(1) == Some(&TokenKind::LParen) {
                    self.idx += 2;
                    let distinct = self.eat_kw("DISTINCT");
                    let column = self.column_ref()?;
                    self.expect(TokenKind::RParen)?;
                    return Ok(ColUnit {
                        agg: Some(agg),
                        distinct,
                        column,
                    });
                }
            }
        }
        Ok(ColUnit::column(self.column_ref()?))
    }

    fn column_ref(&mut self) -> Result<ColumnRef, SyntaxError> {
        if self.eat(&TokenKind::Star) {
            return Ok(ColumnRef::star());
        }
        let first = self.name("column")?;
        if self.eat(&TokenKind::Dot) {
            if self.eat(&TokenKind::Star) {
                return Ok(ColumnRef {
                    table: Some(Ident::new(first)),
                    column: Ident::star(),
                });
            }
            let col = self.name("column")?;
            return Ok(ColumnRef {
                table: Some(Ident::new(first)),
                column: Ident::new(col),
            });
        }
        Ok(ColumnRef {
            table: None,
            column: Ident::new(first),
        })
    }

    // ---- resolution ------------------------------------------------------

    fn resolve_level(&self, raw: &SqlAst, scopes: &[Scope]) -> Result<SqlAst, ResolutionError> {
        let cur = scopes.last().expect("level scope");
        let items = raw
            .select
            .items
            .iter()
            .map(|v| self.resolve_value(v, scopes))
            .collect::<Result<Vec<_>, _>>()?;
        let join = raw
            .from
            .join
            .as_ref()
            .map(|t| self.resolve_tree(t, scopes))
            .transpose()?;
        let where_clause = raw
            .where_clause
            .as_ref()
            .map(|t| self.resolve_tree(t, scopes))
            .transpose()?;
        let group_by = raw
            .group_by
            .iter()
            .map(|c| self.resolve_column(c, scopes))
            .collect::<Result<Vec<_>, _>>()?;
        let having = match &raw.having {
            Some(t) => Some(ConditionTree {
                conditions: t
                    .conditions
                    .iter()
                    .map(|p| {
                        let lhs = self.resolve_aliased(&p.lhs, cur, scopes)?;
                        let mut r = self.resolve_predicate(p, scopes)?;
                        r.lhs = lhs;
                        Ok(r)
                    })
                    .collect::<Result<Vec<_>, ResolutionError>>()?,
                op: t.op,
            }),
            None => None,
        };
        let order_by = match &raw.order_by {
            Some(o) => Some(OrderBy {
                items: o
                    .items
                    .iter()
                    .map(|v| self.resolve_aliased(v, cur, scopes))
                    .collect::<Result<Vec<_>, _>>()?,
                direction: o.direction,
            }),
            None => None,
        };
        Ok(SqlAst {
            select: SelectClause {
                distinct: raw.select.distinct,
                items,
            },
            from: FromClause {
                tables: raw.from.tables.clone(),
                subquery: raw.from.subquery.clone(),
                join,
            },
            where_clause,
            group_by,
            having,
            order_by,
            limit: raw.limit,
            set_op: None,
        })
    }

    /// Substitutes a bare reference to a select alias by its expression.
    fn resolve_aliased(
        &self,
        v: &ValueExpr,
        cur: &Scope,
        scopes: &[Scope],
    ) -> Result<ValueExpr, ResolutionError> {
        if v.rhs.is_none() && v.lhs.agg.is_none() && v.lhs.column.table.is_none() {
            if let Some((_, e)) = cur
                .select_aliases
                .iter()
                .find(|(a, _)| a.eq_ignore_ascii_case(v.lhs.column.column.as_str()))
            {
                return self.resolve_value(e, scopes);
            }
        }
        self.resolve_value(v, scopes)
    }

    fn resolve_tree(
        &self,
        t: &ConditionTree,
        scopes: &[Scope],
    ) -> Result<ConditionTree, ResolutionError> {
        Ok(ConditionTree {
            conditions: t
                .conditions
                .iter()
                .map(|p| self.resolve_predicate(p, scopes))
                .collect::<Result<_, _>>()?,
            op: t.op,
        })
    }

    fn resolve_predicate(
        &self,
        p: &Predicate,
        scopes: &[Scope],
    ) -> Result<Predicate, ResolutionError> {
        let operand = |o: &Operand| -> Result<Operand, ResolutionError> {
            Ok(match o {
                Operand::Column(v) => Operand::Column(self.resolve_value(v, scopes)?),
                other => other.clone(),
            })
        };
        Ok(Predicate {
            lhs: self.resolve_value(&p.lhs, scopes)?,
            negated: p.negated,
            op: p.op,
            rhs: operand(&p.rhs)?,
            rhs2: p.rhs2.as_ref().map(operand).transpose()?,
        })
    }

    fn resolve_value(&self, v: &ValueExpr, scopes: &[Scope]) -> Result<ValueExpr, ResolutionError> {
        let unit = |u: &ColUnit| -> Result<ColUnit, ResolutionError> {
            Ok(ColUnit {
                agg: u.agg,
                distinct: u.distinct,
                column: self.resolve_column(&u.column, scopes)?,
            })
        };
        Ok(ValueExpr {
            lhs: unit(&v.lhs)?,
            rhs: v
                .rhs
                .as_ref()
                .map(|(op, u)| Ok((*op, unit(u)?)))
                .transpose()?,
        })
    }

    fn resolve_column(
        &self,
        c: &ColumnRef,
        scopes: &[Scope],
    ) -> Result<ColumnRef, ResolutionError> {
        let catalog = self.opts.catalog;
        let with_table = |table: Ident| -> Result<ColumnRef, ResolutionError> {
            if c.column.is_star() {
                return Ok(ColumnRef {
                    table: Some(table),
                    column: Ident::star(),
                });
            }
            match catalog {
                Some(cat) => cat
                    .resolve(&ColumnRef {
                        table: Some(table.clone()),
                        column: c.column.clone(),
                    })
                    .ok_or_else(|| {
                        ResolutionError(format!("unknown column `{}.{}`", table, c.column))
                    }),
                None => Ok(ColumnRef {
                    table: Some(table),
                    column: c.column.clone(),
                }),
            }
        };
        let derived = || ColumnRef {
            table: None,
            column: c.column.clone(),
        };

        if let Some(q) = &c.table {
            for scope in scopes.iter().rev() {
                if matches!(&scope.subquery_alias, Some(a) if *q == *a.as_str()) {
                    return Ok(derived());
                }
                if let Some((t, _)) = scope
                    .tables
                    .iter()
                    .find(|(_, alias)| matches!(alias, Some(a) if *q == *a.as_str()))
                {
                    return with_table(t.clone());
                }
                if let Some((t, _)) = scope.tables.iter().find(|(t, _)| t == q) {
                    return with_table(t.clone());
                }
            }
            return match catalog {
                Some(cat) => match cat.table(q.as_str()) {
                    Some(t) => with_table(t.name.clone()),
                    None => Err(ResolutionError(format!("unknown table or alias `{q}`"))),
                },
                None => with_table(q.clone()),
            };
        }

        if c.column.is_star() {
            return Ok(ColumnRef::star());
        }

        for scope in scopes.iter().rev() {
            let mut distinct_tables: Vec<&Ident> = Vec::new();
            for (t, _) in &scope.tables {
                if !distinct_tables.contains(&t) {
                    distinct_tables.push(t);
                }
            }
            match catalog {
                Some(cat) => {
                    let owners: Vec<&Ident> = distinct_tables
                        .iter()
                        .copied()
                        .filter(|t| {
                            cat.table(t.as_str())
                                .and_then(|tb| tb.column(c.column.as_str()))
                                .is_some()
                        })
                        .collect();
                    match owners.len() {
                        1 => return with_table(owners[0].clone()),
                        0 if scope.subquery => return Ok(derived()),
                        0 => continue,
                        _ => {
                            return Err(ResolutionError(format!(
                                "ambiguous column `{}` (in {})",
                                c.column,
                                owners
                                    .iter()
                                    .map(|t| t.as_str())
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            )))
                        }
                    }
                }
                None => {
                    if distinct_tables.len() == 1 && !scope.subquery {
                        return with_table(distinct_tables[0].clone());
                    }
                    if distinct_tables.is_empty() && scope.subquery {
                        return Ok(derived());
                    }
                    if self.opts.lenient {
                        return Ok(derived());
                    }
                    return Err(ResolutionError(format!(
                        "cannot attribute column `{}` without a schema",
                        c.column
                    )));
                }
            }
        }

        match catalog {
            Some(cat) => {
                let owners = cat.tables_with_column(c.column.as_str());
                if owners.len() == 1 && scopes.is_empty() {
                    return with_table(owners[0].name.clone());
                }
                if self.opts.lenient {
                    return Ok(derived());
                }
                if owners.is_empty() {
                    Err(ResolutionError(format!("unknown column `{}`", c.column)))
                } else if scopes.is_empty() {
                    Err(ResolutionError(format!("ambiguous column `{}`", c.column)))
                } else {
                    Err(ResolutionError(format!(
                        "column `{}` is not in any FROM table",
                        c.column
                    )))
                }
            }
            None if self.opts.lenient => Ok(derived()),
            None => Err(ResolutionError(format!(
                "cannot attribute column `{}` without a schema",
                c.column
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Column, ColumnType, Table};

    fn cat() -> SchemaCatalog {
        let t = |name: &str, cols: &[&str]| Table {
            name: Ident::new(name),
            columns: cols
                .iter()
                .map(|c| Column {
                    name: Ident::new(*c),
                    ty: ColumnType::Text,
                })
                .collect(),
        };
        SchemaCatalog::new(
            "phone_market",
            vec![
                t(
                    "phone",
                    &["Name", "Phone_ID", "Memory_in_G", "Carrier", "Price"],
                ),
                t(
                    "market",
                    &[
                        "Market_ID",
                        "District",
                        "Num_of_employees",
                        "Num_of_shops",
                        "Ranking",
                    ],
                ),
                t("phone_market", &["Market_ID", "Phone_ID", "Num_of_stock"]),
            ],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn resolves_aliases_to_tables() {
        let ast = parse(
            r#"SELECT T1.Name, T3.District FROM phone AS T1 JOIN phone_market AS T2 JOIN market AS T3 ON T1.Phone_ID = T2.Phone_ID AND T2.Market_ID = T3.Market_ID WHERE T3.District = "Alberta""#,
            &cat(),
        )
        .unwrap();
        assert_eq!(
            ast.select.items,
            vec![
                ValueExpr::column(ColumnRef::new("phone", "Name")),
                ValueExpr::column(ColumnRef::new("market", "District")),
            ]
        );
        assert_eq!(ast.from.join.as_ref().unwrap().conditions.len(), 2);
    }

    #[test]
    fn reports_position_and_expectation() {
        let err = parse("SELECT 1 FROM", &cat()).unwrap_err();
        assert!(matches!(err, ParseError::Syntax(_)), "{err:?}");
        let ParseError::Syntax(e) = parse("SELECT Name FROM", &cat()).unwrap_err() else {
            panic!()
        };
        assert_eq!(e.pos, 16);
        assert_eq!(e.expected, vec!["table name".to_string()]);
    }

    #[test]
    fn unknown_and_ambiguous_columns_are_resolution_errors() {
        assert!(matches!(
            parse("SELECT nope FROM phone", &cat()),
            Err(ParseError::Resolution(_))
        ));
        assert!(matches!(
            parse("SELECT Phone_ID FROM phone JOIN phone_market", &cat()),
            Err(ParseError::Resolution(_))
        ));
        assert!(matches!(
            parse("SELECT * FROM nowhere", &cat()),
            Err(ParseError::Resolution(_))
        ));
    }

    #[test]
    fn mixed_logical_operators_are_rejected() {
        assert!(parse(
            "SELECT Name FROM phone WHERE Price > 1 AND Carrier = 'a' OR Name = 'b'",
            &cat()
        )
        .is_err());
    }

    #[test]
    fn between_keeps_its_and() {
        let ast = parse(
            "SELECT Name FROM phone WHERE Price BETWEEN 1 AND 5 AND Carrier = 'x'",
            &cat(),
        )
        .unwrap();
        let w = ast.where_clause.unwrap();
        assert_eq!(w.conditions.len(), 2);
        assert_eq!(w.op, LogicalOp::And);
    }

    #[test]
    fn order_by_select_alias() {
        let ast = parse(
            "SELECT Carrier, count(*) AS cnt FROM phone GROUP BY Carrier ORDER BY cnt DESC LIMIT 1",
            &cat(),
        )
        .unwrap();
        let o = ast.order_by.unwrap();
        assert_eq!(o.items[0].lhs.agg, Some(Aggregate::Count));
        assert_eq!(o.direction, OrderDirection::Desc);
        assert_eq!(ast.limit, Some(1));
    }

    #[test]
    fn nested_subquery_sees_outer_scope() {
        let ast = parse(
            "SELECT Name FROM phone WHERE Phone_ID NOT IN (SELECT Phone_ID FROM phone_market) INTERSECT SELECT Name FROM phone WHERE Price > 10",
            &cat(),
        )
        .unwrap();
        let w = ast.where_clause.as_ref().unwrap();
        assert!(w.conditions[0].negated);
        let Operand::Subquery(q) = &w.conditions[0].rhs else {
            panic!()
        };
        assert_eq!(
            q.select.items[0].lhs.column,
            ColumnRef::new("phone_market", "Phone_ID")
        );
        assert_eq!(ast.set_op.as_ref().unwrap().op, SetOperator::Intersect);
    }

    #[test]
    fn nested_from_columns_are_derived() {
        let ast = parse(
            "SELECT count(*) FROM (SELECT Carrier FROM phone GROUP BY Carrier) AS sub",
            &cat(),
        )
        .unwrap();
        assert!(ast.from.subquery.is_some());
        assert!(ast.from.tables.is_empty());
    }

    #[test]
    fn catalog_free_fragments_need_qualification() {
        let opts = ParseOptions::without_catalog();
        assert!(parse_with("SELECT a FROM t WHERE b = 1", opts).is_ok());
        assert!(parse_with("SELECT a FROM t JOIN s", opts).is_err());
        assert!(parse_with("SELECT a FROM t JOIN s", ParseOptions::lenient()).is_ok());
        let p = parse_predicate("Stu.GPA > 3", opts).unwrap();
        assert_eq!(p.lhs.lhs.column, ColumnRef::new("Stu", "GPA"));
    }
}
