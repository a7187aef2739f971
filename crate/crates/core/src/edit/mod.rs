//! The unit edit algebra: fourteen edit rules that turn one query into
//! another, chains of them, and their textual forms.

mod apply;
pub mod dict;
mod render;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ast::*;

pub use apply::{apply_chain, apply_edit, ChainApplyError, EditError};
pub use render::{
    edit_phrase, parse_rendered_edits, parse_rendered_edits_detailed, render_chain,
    rule_catalog_text, RenderParseError, NO_CHANGE,
};

/// The fourteen rule names, in catalog order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleTag {
    Iue,
    FromTable,
    JoinCondition,
    JoinLogicalOperator,
    NestedFromClause,
    SelectItem,
    WhereCondition,
    WhereLogicalOperator,
    GroupByColumn,
    HavingCondition,
    HavingLogicalOperator,
    OrderByItem,
    Order,
    Limit,
}

impl RuleTag {
    pub const ALL: [RuleTag; 14] = [
        RuleTag::Iue,
        RuleTag::FromTable,
        RuleTag::JoinCondition,
        RuleTag::JoinLogicalOperator,
        RuleTag::NestedFromClause,
        RuleTag::SelectItem,
        RuleTag::WhereCondition,
        RuleTag::WhereLogicalOperator,
        RuleTag::GroupByColumn,
        RuleTag::HavingCondition,
        RuleTag::HavingLogicalOperator,
        RuleTag::OrderByItem,
        RuleTag::Order,
        RuleTag::Limit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleTag::Iue => "EditIUE",
            RuleTag::FromTable => "EditFromTable",
            RuleTag::JoinCondition => "EditJoinCondition",
            RuleTag::JoinLogicalOperator => "EditJoinLogicalOperator",
            RuleTag::NestedFromClause => "EditNestedFromClause",
            RuleTag::SelectItem => "EditSelectItem",
            RuleTag::WhereCondition => "EditWhereCondition",
            RuleTag::WhereLogicalOperator => "EditWhereLogicalOperator",
            RuleTag::GroupByColumn => "EditGroupByColumn",
            RuleTag::HavingCondition => "EditHavingCondition",
            RuleTag::HavingLogicalOperator => "EditHavingLogicalOperator",
            RuleTag::OrderByItem => "EditOrderByItem",
            RuleTag::Order => "EditOrder",
            RuleTag::Limit => "EditLimit",
        }
    }

    pub fn from_name(name: &str) -> Option<RuleTag> {
        RuleTag::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(name))
    }

    /// Short lowercase alias used on the command line, e.g. `select`.
    pub fn short(self) -> &'static str {
        match self {
            RuleTag::Iue => "iue",
            RuleTag::FromTable => "from-table",
            RuleTag::JoinCondition => "join-condition",
            RuleTag::JoinLogicalOperator => "join-op",
            RuleTag::NestedFromClause => "nested-from",
            RuleTag::SelectItem => "select",
            RuleTag::WhereCondition => "where",
            RuleTag::WhereLogicalOperator => "where-op",
            RuleTag::GroupByColumn => "group-by",
            RuleTag::HavingCondition => "having",
            RuleTag::HavingLogicalOperator => "having-op",
            RuleTag::OrderByItem => "order-by",
            RuleTag::Order => "order",
            RuleTag::Limit => "limit",
        }
    }

    pub fn heading(self) -> Heading {
        match self {
            RuleTag::Iue => Heading::SetOp,
            RuleTag::FromTable
            | RuleTag::JoinCondition
            | RuleTag::JoinLogicalOperator
            | RuleTag::NestedFromClause => Heading::From,
            RuleTag::SelectItem => Heading::Select,
            RuleTag::WhereCondition | RuleTag::WhereLogicalOperator => Heading::Where,
            RuleTag::GroupByColumn | RuleTag::HavingCondition | RuleTag::HavingLogicalOperator => {
                Heading::GroupBy
            }
            RuleTag::OrderByItem | RuleTag::Order => Heading::OrderBy,
            RuleTag::Limit => Heading::Limit,
        }
    }
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        RuleTag::from_name(s)
            .or_else(|| {
                RuleTag::ALL
                    .into_iter()
                    .find(|t| t.short().eq_ignore_ascii_case(s))
            })
            .ok_or_else(|| format!("unknown edit rule `{s}`"))
    }
}

/// Clause headings of the rendered chain, in rendering order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    From,
    Select,
    Where,
    GroupBy,
    OrderBy,
    Limit,
    SetOp,
}

impl Heading {
    pub const ALL: [Heading; 7] = [
        Heading::From,
        Heading::Select,
        Heading::Where,
        Heading::GroupBy,
        Heading::OrderBy,
        Heading::Limit,
        Heading::SetOp,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Heading::From => "FROM clause:",
            Heading::Select => "SELECT clause:",
            Heading::Where => "WHERE clause:",
            Heading::GroupBy => "GROUP BY clause:",
            Heading::OrderBy => "ORDER BY clause:",
            Heading::Limit => "LIMIT clause:",
            Heading::SetOp => "INTERSECT/UNION/EXCEPT:",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn keyword(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Side> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            _ => None,
        }
    }
}

/// One entry of the select list. The query-level DISTINCT is carried by the
/// first entry, so toggling it is an ordinary select-item change.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectEntry {
    pub distinct: bool,
    pub expr: ValueExpr,
}

impl SelectEntry {
    pub fn plain(expr: ValueExpr) -> Self {
        SelectEntry {
            distinct: false,
            expr,
        }
    }

    pub fn list(select: &SelectClause) -> Vec<SelectEntry> {
        select
            .items
            .iter()
            .enumerate()
            .map(|(i, e)| SelectEntry {
                distinct: i == 0 && select.distinct,
                expr: e.clone(),
            })
            .collect()
    }

    pub fn clause(entries: Vec<SelectEntry>) -> SelectClause {
        SelectClause {
            distinct: entries.iter().any(|e| e.distinct),
            items: entries.into_iter().map(|e| e.expr).collect(),
        }
    }
}

/// A single edit-rule application. `None` on either side of a two-sided
/// edit stands for "-": absent old means add, absent new means delete.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnitEdit {
    Iue {
        op: SetOperator,
        side: Side,
        sql: Option<Box<SqlAst>>,
    },
    FromTable {
        old: Option<Ident>,
        new: Option<Ident>,
    },
    JoinCondition {
        old: Option<Predicate>,
        new: Option<Predicate>,
    },
    JoinLogicalOperator(LogicalOp),
    NestedFromClause(Option<Box<SqlAst>>),
    SelectItem {
        old: Option<SelectEntry>,
        new: Option<SelectEntry>,
    },
    WhereCondition {
        old: Option<Predicate>,
        new: Option<Predicate>,
    },
    WhereLogicalOperator(LogicalOp),
    GroupByColumn {
        old: Option<ColumnRef>,
        new: Option<ColumnRef>,
    },
    HavingCondition {
        old: Option<Predicate>,
        new: Option<Predicate>,
    },
    HavingLogicalOperator(LogicalOp),
    OrderByItem {
        old: Option<ValueExpr>,
        new: Option<ValueExpr>,
    },
    Order(OrderDirection),
    Limit {
        old: Option<u64>,
        new: Option<u64>,
    },
}

impl UnitEdit {
    pub fn tag(&self) -> RuleTag {
        match self {
            UnitEdit::Iue { .. } => RuleTag::Iue,
            UnitEdit::FromTable { .. } => RuleTag::FromTable,
            UnitEdit::JoinCondition { .. } => RuleTag::JoinCondition,
            UnitEdit::JoinLogicalOperator(_) => RuleTag::JoinLogicalOperator,
            UnitEdit::NestedFromClause(_) => RuleTag::NestedFromClause,
            UnitEdit::SelectItem { .. } => RuleTag::SelectItem,
            UnitEdit::WhereCondition { .. } => RuleTag::WhereCondition,
            UnitEdit::WhereLogicalOperator(_) => RuleTag::WhereLogicalOperator,
            UnitEdit::GroupByColumn { .. } => RuleTag::GroupByColumn,
            UnitEdit::HavingCondition { .. } => RuleTag::HavingCondition,
            UnitEdit::HavingLogicalOperator(_) => RuleTag::HavingLogicalOperator,
            UnitEdit::OrderByItem { .. } => RuleTag::OrderByItem,
            UnitEdit::Order(_) => RuleTag::Order,
            UnitEdit::Limit { .. } => RuleTag::Limit,
        }
    }

    pub fn heading(&self) -> Heading {
        self.tag().heading()
    }

    /// True when both sides of a two-sided edit are absent.
    pub fn is_void(&self) -> bool {
        match self {
            UnitEdit::FromTable { old, new } => old.is_none() && new.is_none(),
            UnitEdit::JoinCondition { old, new }
            | UnitEdit::WhereCondition { old, new }
            | UnitEdit::HavingCondition { old, new } => old.is_none() && new.is_none(),
            UnitEdit::SelectItem { old, new } => old.is_none() && new.is_none(),
            UnitEdit::GroupByColumn { old, new } => old.is_none() && new.is_none(),
            UnitEdit::OrderByItem { old, new } => old.is_none() && new.is_none(),
            UnitEdit::Limit { old, new } => old.is_none() && new.is_none(),
            _ => false,
        }
    }
}

/// An ordered edit list from a source query to a target query.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EditChain {
    pub edits: Vec<UnitEdit>,
    /// 1-based index of the earlier turn the target is edited from.
    pub source_turn: Option<usize>,
    /// The target is written from scratch rather than edited.
    pub direct: bool,
}

impl EditChain {
    pub fn direct() -> Self {
        EditChain {
            edits: Vec::new(),
            source_turn: None,
            direct: true,
        }
    }

    pub fn edited(source_turn: Option<usize>, edits: Vec<UnitEdit>) -> Self {
        EditChain {
            edits,
            source_turn,
            direct: false,
        }
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStyle {
    #[default]
    EditRule,
    Code,
    NaturalLanguage,
}

impl ChainStyle {
    pub const ALL: [ChainStyle; 3] = [
        ChainStyle::EditRule,
        ChainStyle::Code,
        ChainStyle::NaturalLanguage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChainStyle::EditRule => "edit-rule",
            ChainStyle::Code => "code",
            ChainStyle::NaturalLanguage => "natural-language",
        }
    }
}

impl fmt::Display for ChainStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChainStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "edit-rule" | "editrule" | "rule" => Ok(ChainStyle::EditRule),
            "code" | "python" | "python-code" => Ok(ChainStyle::Code),
            "natural-language" | "nl" | "natural" => Ok(ChainStyle::NaturalLanguage),
            other => Err(format!("unknown chain style `{other}`")),
        }
    }
}
