//! Typed tree for the Spider-family SQL subset.
//!
//! Column references carry canonical table names (aliases are resolved away
//! by the parser), so two trees describing the same query compare equal no
//! matter how the source text spelled its aliases. Identifiers compare
//! case-insensitively; literals compare case-sensitively, except that two
//! literals which both read as numbers compare by value.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

/// An SQL identifier. Equality, ordering and hashing ignore ASCII case; the
/// original spelling is kept for rendering.
#[derive(Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ident(String);

impl Ident {
    pub fn new(name: impl Into<String>) -> Self {
        Ident(name.into())
    }

    pub fn star() -> Self {
        Ident("*".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_star(&self) -> bool {
        self.0 == "*"
    }

    pub fn folded(&self) -> String {
        self.0.to_ascii_lowercase()
    }
}

impl PartialEq for Ident {
    fn eq(&self, other: &Self) -> bool {
        self.0.eq_ignore_ascii_case(&other.0)
    }
}

impl Eq for Ident {}

impl PartialEq<str> for Ident {
    fn eq(&self, other: &str) -> bool {
        self.0.eq_ignore_ascii_case(other)
    }
}

impl Hash for Ident {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for b in self.0.bytes() {
            state.write_u8(b.to_ascii_lowercase());
        }
    }
}

impl Ord for Ident {
    fn cmp(&self, other: &Self) -> Ordering {
        let a = self.0.bytes().map(|b| b.to_ascii_lowercase());
        let b = other.0.bytes().map(|b| b.to_ascii_lowercase());
        a.cmp(b)
    }
}

impl PartialOrd for Ident {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Ident {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Ident {
    fn from(s: &str) -> Self {
        Ident(s.to_string())
    }
}

/// `table.column`, `*`, or `table.*`. A missing table on a non-star column
/// marks a column produced by a nested FROM subquery.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: Option<Ident>,
    pub column: Ident,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: Some(Ident::new(table)),
            column: Ident::new(column),
        }
    }

    pub fn star() -> Self {
        ColumnRef {
            table: None,
            column: Ident::star(),
        }
    }

    pub fn is_star(&self) -> bool {
        self.column.is_star()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 5] = [
        Aggregate::Count,
        Aggregate::Sum,
        Aggregate::Avg,
        Aggregate::Min,
        Aggregate::Max,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
            Aggregate::Min => "MIN",
            Aggregate::Max => "MAX",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Aggregate::ALL
            .into_iter()
            .find(|a| a.keyword().eq_ignore_ascii_case(word))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// An optionally aggregated column, e.g. `COUNT(DISTINCT t.x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColUnit {
    pub agg: Option<Aggregate>,
    pub distinct: bool,
    pub column: ColumnRef,
}

impl ColUnit {
    pub fn column(column: ColumnRef) -> Self {
        ColUnit {
            agg: None,
            distinct: false,
            column,
        }
    }

    pub fn aggregated(agg: Aggregate, column: ColumnRef) -> Self {
        ColUnit {
            agg: Some(agg),
            distinct: false,
            column,
        }
    }
}

/// A column unit, or an arithmetic pair of column units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ValueExpr {
    pub lhs: ColUnit,
    pub rhs: Option<(ArithOp, ColUnit)>,
}

impl ValueExpr {
    pub fn unit(unit: ColUnit) -> Self {
        ValueExpr {
            lhs: unit,
            rhs: None,
        }
    }

    pub fn column(column: ColumnRef) -> Self {
        ValueExpr::unit(ColUnit::column(column))
    }

    pub fn units(&self) -> impl Iterator<Item = &ColUnit> {
        std::iter::once(&self.lhs).chain(self.rhs.as_ref().map(|(_, u)| u))
    }

    pub fn has_aggregate(&self) -> bool {
        self.units().any(|u| u.agg.is_some())
    }
}

pub type SelectItem = ValueExpr;
pub type OrderItem = ValueExpr;

/// A literal value kept as opaque source text. `quote` is the quote
/// character for string literals and `None` for bare numbers and keywords
/// such as `NULL`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Literal {
    pub text: String,
    pub quote: Option<char>,
}

impl Literal {
    pub fn number(text: impl Into<String>) -> Self {
        Literal {
            text: text.into(),
            quote: None,
        }
    }

    pub fn string(text: impl Into<String>) -> Self {
        Literal {
            text: text.into(),
            quote: Some('"'),
        }
    }

    pub fn numeric_value(&self) -> Option<f64> {
        numeric_value(&self.text)
    }
}

/// Reads `text` as a finite decimal number. Words like `inf` or `nan` are not
/// numbers here.
pub fn numeric_value(text: &str) -> Option<f64> {
    let t = text.trim();
    let body = t.strip_prefix(['-', '+']).unwrap_or(t);
    let mut digits = 0;
    let mut dots = 0;
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        if c.is_ascii_digit() {
            digits += 1;
        } else if c == '.' {
            dots += 1;
        } else {
            break;
        }
        rest = &rest[1..];
    }
    if digits == 0 || dots > 1 {
        return None;
    }
    if let Some(exp) = rest.strip_prefix(['e', 'E']) {
        let exp = exp.strip_prefix(['-', '+']).unwrap_or(exp);
        if exp.is_empty() || !exp.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    } else if !rest.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        match (self.numeric_value(), other.numeric_value()) {
            (Some(a), Some(b)) => a == b,
            _ => self.text == other.text,
        }
    }
}

impl Eq for Literal {}

impl Hash for Literal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self.numeric_value() {
            Some(v) => {
                // -0.0 == 0.0
                let v = if v == 0.0 { 0.0 } else { v };
                v.to_bits().hash(state)
            }
            None => self.text.hash(state),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
    Like,
    In,
    Between,
    Is,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
            CompareOp::Le => "<=",
            CompareOp::Ge => ">=",
            CompareOp::Like => "LIKE",
            CompareOp::In => "IN",
            CompareOp::Between => "BETWEEN",
            CompareOp::Is => "IS",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Literal(Literal),
    Column(ValueExpr),
    Subquery(Box<SqlAst>),
}

/// `lhs [NOT] op rhs [AND rhs2]`; `rhs2` is only set for BETWEEN.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub lhs: ValueExpr,
    pub negated: bool,
    pub op: CompareOp,
    pub rhs: Operand,
    pub rhs2: Option<Operand>,
}

impl Predicate {
    pub fn new(lhs: ValueExpr, op: CompareOp, rhs: Operand) -> Self {
        Predicate {
            lhs,
            negated: false,
            op,
            rhs,
            rhs2: None,
        }
    }

    pub fn subqueries(&self) -> impl Iterator<Item = &SqlAst> {
        [&self.rhs]
            .into_iter()
            .chain(self.rhs2.as_ref())
            .filter_map(|o| match o {
                Operand::Subquery(q) => Some(q.as_ref()),
                _ => None,
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum LogicalOp {
    #[default]
    And,
    Or,
}

impl LogicalOp {
    pub fn keyword(self) -> &'static str {
        match self {
            LogicalOp::And => "AND",
            LogicalOp::Or => "OR",
        }
    }
}

/// A flat list of predicates joined by one logical operator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionTree {
    pub conditions: Vec<Predicate>,
    pub op: LogicalOp,
}

impl ConditionTree {
    pub fn single(p: Predicate) -> Self {
        ConditionTree {
            conditions: vec![p],
            op: LogicalOp::And,
        }
    }
}

/// The FROM clause: a list of joined tables, a nested subquery, or (only as
/// an intermediate state while applying edits) both.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FromClause {
    pub tables: Vec<Ident>,
    pub subquery: Option<Box<SqlAst>>,
    pub join: Option<ConditionTree>,
}

impl FromClause {
    pub fn table(name: impl Into<String>) -> Self {
        FromClause {
            tables: vec![Ident::new(name)],
            subquery: None,
            join: None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.subquery.is_none()
    }

    /// Tables plus the nested subquery, the unit count used by join metrics.
    pub fn unit_count(&self) -> usize {
        self.tables.len() + usize::from(self.subquery.is_some())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectClause {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum OrderDirection {
    #[default]
    Asc,
    Desc,
}

impl OrderDirection {
    pub fn keyword(self) -> &'static str {
        match self {
            OrderDirection::Asc => "ASC",
            OrderDirection::Desc => "DESC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrderBy {
    pub items: Vec<OrderItem>,
    pub direction: OrderDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetOperator {
    Intersect,
    Union,
    Except,
}

impl SetOperator {
    pub const ALL: [SetOperator; 3] = [
        SetOperator::Intersect,
        SetOperator::Union,
        SetOperator::Except,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            SetOperator::Intersect => "INTERSECT",
            SetOperator::Union => "UNION",
            SetOperator::Except => "EXCEPT",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        SetOperator::ALL
            .into_iter()
            .find(|o| o.keyword().eq_ignore_ascii_case(word))
    }
}

/// `<this query> op <rhs>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetOp {
    pub op: SetOperator,
    pub rhs: Box<SqlAst>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SqlAst {
    pub select: SelectClause,
    pub from: FromClause,
    pub where_clause: Option<ConditionTree>,
    pub group_by: Vec<ColumnRef>,
    pub having: Option<ConditionTree>,
    pub order_by: Option<OrderBy>,
    pub limit: Option<u64>,
    pub set_op: Option<SetOp>,
}

impl SqlAst {
    /// `SELECT <items> FROM <from>` with every other clause empty.
    pub fn simple(items: Vec<SelectItem>, from: FromClause) -> Self {
        SqlAst {
            select: SelectClause {
                distinct: false,
                items,
            },
            from,
            where_clause: None,
            group_by: Vec::new(),
            having: None,
            order_by: None,
            limit: None,
            set_op: None,
        }
    }

    /// The query without its set operation.
    pub fn body(&self) -> SqlAst {
        SqlAst {
            set_op: None,
            ..self.clone()
        }
    }

    /// Subqueries nested in FROM and in conditions (not the set-operation
    /// operand).
    pub fn nested_queries(&self) -> Vec<&SqlAst> {
        let mut out: Vec<&SqlAst> = Vec::new();
        if let Some(q) = &self.from.subquery {
            out.push(q);
        }
        for tree in [&self.from.join, &self.where_clause, &self.having]
            .into_iter()
            .flatten()
        {
            for p in &tree.conditions {
                out.extend(p.subqueries());
            }
        }
        out
    }

    /// Checks the structural invariants every tree must satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.select.items.is_empty() {
            return Err("SELECT list is empty".into());
        }
        if self.from.is_empty() {
            return Err("FROM clause is empty".into());
        }
        for (name, tree) in [
            ("ON", &self.from.join),
            ("WHERE", &self.where_clause),
            ("HAVING", &self.having),
        ] {
            if matches!(tree, Some(t) if t.conditions.is_empty()) {
                return Err(format!("{name} clause has no conditions"));
            }
        }
        if self.having.is_some() && self.group_by.is_empty() {
            return Err("HAVING without GROUP BY".into());
        }
        if matches!(&self.order_by, Some(o) if o.items.is_empty()) {
            return Err("ORDER BY clause has no items".into());
        }
        for item in &self.select.items {
            check_star(item)?;
        }
        if let Some(set) = &self.set_op {
            if set.rhs.set_op.is_some() {
                return Err("set operations nest deeper than one level".into());
            }
            set.rhs.check_invariants()?;
        }
        for q in self.nested_queries() {
            q.check_invariants()?;
        }
        Ok(())
    }
}

fn check_star(item: &ValueExpr) -> Result<(), String> {
    for unit in item.units() {
        if unit.column.is_star() && !matches!(unit.agg, None | Some(Aggregate::Count)) {
            return Err(format!(
                "{}(*) is not allowed",
                unit.agg.map(Aggregate::keyword).unwrap_or_default()
            ));
        }
    }
    Ok(())
}
