use thiserror::Error;

use super::{EditChain, SelectEntry, Side, UnitEdit};
use crate::ast::*;
use crate::normalize::normalize;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EditError {
    #[error("edit target missing: {0}")]
    TargetMissing(String),
    #[error("invalid edit: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Error)]
#[error("edit {index} ({rule}) failed: {error}")]
pub struct ChainApplyError {
    /// 0-based position of the failing edit.
    pub index: usize,
    pub rule: &'static str,
    pub error: EditError,
}

/// Applies one edit and returns the normalized result. `ast` is untouched.
pub fn apply_edit(ast: &SqlAst, edit: &UnitEdit) -> Result<SqlAst, EditError> {
    if edit.is_void() {
        return Err(EditError::Invalid(format!(
            "{} with both sides \"-\"",
            edit.tag()
        )));
    }
    let mut out = ast.clone();
    match edit {
        UnitEdit::Iue { op, side, sql } => out = apply_set_op(ast, *op, *side, sql.as_deref())?,
        UnitEdit::FromTable { old, new } => edit_list(
            &mut out.from.tables,
            old.as_ref(),
            new.as_ref(),
            "FROM table",
        )?,
        UnitEdit::JoinCondition { old, new } => edit_tree(
            &mut out.from.join,
            old.as_ref(),
            new.as_ref(),
            "JOIN condition",
        )?,
        UnitEdit::JoinLogicalOperator(op) => set_op_of(&mut out.from.join, *op, "JOIN")?,
        UnitEdit::NestedFromClause(sql) => match sql {
            Some(q) => out.from.subquery = Some(q.clone()),
            None => {
                if out.from.subquery.take().is_none() {
                    return Err(EditError::TargetMissing("no nested FROM clause".into()));
                }
            }
        },
        UnitEdit::SelectItem { old, new } => {
            let mut entries = SelectEntry::list(&out.select);
            edit_list(&mut entries, old.as_ref(), new.as_ref(), "SELECT item")?;
            out.select = SelectEntry::clause(entries);
        }
        UnitEdit::WhereCondition { old, new } => edit_tree(
            &mut out.where_clause,
            old.as_ref(),
            new.as_ref(),
            "WHERE condition",
        )?,
        UnitEdit::WhereLogicalOperator(op) => set_op_of(&mut out.where_clause, *op, "WHERE")?,
        UnitEdit::GroupByColumn { old, new } => edit_list(
            &mut out.group_by,
            old.as_ref(),
            new.as_ref(),
            "GROUP BY column",
        )?,
        UnitEdit::HavingCondition { old, new } => edit_tree(
            &mut out.having,
            old.as_ref(),
            new.as_ref(),
            "HAVING condition",
        )?,
        UnitEdit::HavingLogicalOperator(op) => set_op_of(&mut out.having, *op, "HAVING")?,
        UnitEdit::OrderByItem { old, new } => {
            let mut items = out
                .order_by
                .as_ref()
                .map(|o| o.items.clone())
                .unwrap_or_default();
            edit_list(&mut items, old.as_ref(), new.as_ref(), "ORDER BY item")?;
            out.order_by = if items.is_empty() {
                None
            } else {
                Some(OrderBy {
                    items,
                    direction: out.order_by.map(|o| o.direction).unwrap_or_default(),
                })
            };
        }
        UnitEdit::Order(dir) => match &mut out.order_by {
            Some(o) => o.direction = *dir,
            None => {
                return Err(EditError::Invalid(
                    "EditOrder without an ORDER BY clause".into(),
                ))
            }
        },
        UnitEdit::Limit { old, new } => match (old, new, out.limit) {
            (None, Some(_), Some(cur)) => {
                return Err(EditError::Invalid(format!("LIMIT {cur} already present")));
            }
            (None, n, None) => out.limit = *n,
            (Some(o), n, Some(cur)) if *o == cur => out.limit = *n,
            (Some(o), _, _) => return Err(EditError::TargetMissing(format!("LIMIT {o}"))),
            _ => unreachable!("void edits are rejected above"),
        },
    }
    let out = normalize(&out);
    out.check_invariants().map_err(EditError::Invalid)?;
    Ok(out)
}

/// Left fold of [`apply_edit`] over the chain.
pub fn apply_chain(ast: &SqlAst, chain: &EditChain) -> Result<SqlAst, ChainApplyError> {
    let mut cur = normalize(ast);
    for (index, edit) in chain.edits.iter().enumerate() {
        cur = apply_edit(&cur, edit).map_err(|error| ChainApplyError {
            index,
            rule: edit.tag().name(),
            error,
        })?;
    }
    Ok(cur)
}

fn edit_list<T: PartialEq + Clone>(
    list: &mut Vec<T>,
    old: Option<&T>,
    new: Option<&T>,
    what: &str,
) -> Result<(), EditError> {
    match old {
        None => {
            list.push(new.expect("void edits are rejected").clone());
            Ok(())
        }
        Some(o) => {
            let i = list
                .iter()
                .position(|x| x == o)
                .ok_or_else(|| EditError::TargetMissing(what.to_string()))?;
            match new {
                Some(n) => list[i] = n.clone(),
                None => {
                    list.remove(i);
                }
            }
            Ok(())
        }
    }
}

fn edit_tree(
    tree: &mut Option<ConditionTree>,
    old: Option<&Predicate>,
    new: Option<&Predicate>,
    what: &str,
) -> Result<(), EditError> {
    let (mut conditions, op) = match tree.take() {
        Some(t) => (t.conditions, t.op),
        None => (Vec::new(), LogicalOp::And),
    };
    let res = edit_list(&mut conditions, old, new, what);
    *tree = if conditions.is_empty() {
        None
    } else {
        Some(ConditionTree { conditions, op })
    };
    res
}

fn set_op_of(
    tree: &mut Option<ConditionTree>,
    op: LogicalOp,
    clause: &str,
) -> Result<(), EditError> {
    match tree {
        Some(t) => {
            t.op = op;
            Ok(())
        }
        None => Err(EditError::Invalid(format!(
            "no {clause} conditions to join with {}",
            op.keyword()
        ))),
    }
}

fn apply_set_op(
    ast: &SqlAst,
    op: SetOperator,
    side: Side,
    sql: Option<&SqlAst>,
) -> Result<SqlAst, EditError> {
    match (side, sql) {
        (Side::Right, Some(rhs)) => {
            let mut out = ast.body();
            out.set_op = Some(SetOp {
                op,
                rhs: Box::new(rhs.clone()),
            });
            Ok(out)
        }
        (Side::Left, Some(lhs)) => {
            if ast.set_op.is_some() || lhs.set_op.is_some() {
                return Err(EditError::Invalid(
                    "set operations nest deeper than one level".into(),
                ));
            }
            let mut out = lhs.clone();
            out.set_op = Some(SetOp {
                op,
                rhs: Box::new(ast.clone()),
            });
            Ok(out)
        }
        (side, None) => match &ast.set_op {
            Some(s) if s.op == op => Ok(match side {
                Side::Right => ast.body(),
                Side::Left => (*s.rhs).clone(),
            }),
            _ => Err(EditError::TargetMissing(format!(
                "no {} to delete",
                op.keyword()
            ))),
        },
    }
}
