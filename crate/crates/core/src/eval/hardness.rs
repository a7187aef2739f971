//! The Spider difficulty heuristic.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extra,
}

impl Difficulty {
    pub const ALL: [Difficulty; 4] = [
        Difficulty::Easy,
        Difficulty::Medium,
        Difficulty::Hard,
        Difficulty::Extra,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extra => "extra",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn trees(ast: &SqlAst) -> impl Iterator<Item = &ConditionTree> {
    [
        ast.from.join.as_ref(),
        ast.where_clause.as_ref(),
        ast.having.as_ref(),
    ]
    .into_iter()
    .flatten()
}

fn connectors(t: Option<&ConditionTree>) -> usize {
    t.map_or(0, |t| t.conditions.len().saturating_sub(1))
}

/// Clause keywords, joins, `or` connectors and `like` predicates.
fn component1(ast: &SqlAst) -> usize {
    let mut n = [
        ast.where_clause.is_some(),
        !ast.group_by.is_empty(),
        ast.order_by.is_some(),
        ast.limit.is_some(),
    ]
    .iter()
    .filter(|b| **b)
    .count();
    n += ast.from.tables.len().saturating_sub(1);
    for t in trees(ast) {
        if t.op == LogicalOp::Or {
            n += t.conditions.len().saturating_sub(1);
        }
        n += t
            .conditions
            .iter()
            .filter(|p| p.op == CompareOp::Like)
            .count();
    }
    n
}

/// Subqueries in conditions plus a set operation.
fn component2(ast: &SqlAst) -> usize {
    let nested: usize = trees(ast)
        .flat_map(|t| &t.conditions)
        .map(|p| p.subqueries().count())
        .sum();
    nested + usize::from(ast.set_op.is_some())
}

/// Aggregate, select-width, where-width and group-width signals. The
/// aggregate tally reproduces the reference implementation, which counts
/// negated where/having conditions and having connectors as aggregates.
fn others(ast: &SqlAst) -> usize {
    let negated = |t: Option<&ConditionTree>| {
        t.map_or(0, |t| t.conditions.iter().filter(|p| p.negated).count())
    };
    let mut aggs = ast
        .select
        .items
        .iter()
        .filter(|v| v.has_aggregate())
        .count();
    aggs += negated(ast.where_clause.as_ref());
    if let Some(o) = &ast.order_by {
        aggs += o
            .items
            .iter()
            .flat_map(|v| v.units())
            .filter(|u| u.agg.is_some())
            .count();
    }
    aggs += negated(ast.having.as_ref()) + connectors(ast.having.as_ref());
    [
        aggs > 1,
        ast.select.items.len() > 1,
        ast.where_clause
            .as_ref()
            .is_some_and(|w| w.conditions.len() > 1),
        ast.group_by.len() > 1,
    ]
    .iter()
    .filter(|b| **b)
    .count()
}

pub fn difficulty(gold: &SqlAst) -> Difficulty {
    let (c1, c2, o) = (component1(gold), component2(gold), others(gold));
    if c1 <= 1 && o == 0 && c2 == 0 {
        Difficulty::Easy
    } else if (o <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && o < 2 && c2 == 0) {
        Difficulty::Medium
    } else if (o > 2 && c1 <= 2 && c2 == 0)
        || (c1 == 3 && o <= 2 && c2 == 0)
        || (c1 <= 1 && o == 0 && c2 <= 1)
    {
        Difficulty::Hard
    } else {
        Difficulty::Extra
    }
}
