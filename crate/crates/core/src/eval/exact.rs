//! Component-wise exact match with values masked.

use crate::ast::*;
use crate::normalize::normalize;
use crate::unparse::{column_text, value_text};

fn mask_operand(o: &Operand) -> Operand {
    match o {
        Operand::Literal(_) => Operand::Literal(Literal {
            text: "value".into(),
            quote: None,
        }),
        Operand::Column(v) => Operand::Column(v.clone()),
        Operand::Subquery(q) => Operand::Subquery(Box::new(canonical(q))),
    }
}

fn mask_tree(t: &ConditionTree) -> ConditionTree {
    ConditionTree {
        conditions: t
            .conditions
            .iter()
            .map(|p| Predicate {
                rhs: mask_operand(&p.rhs),
                rhs2: p.rhs2.as_ref().map(mask_operand),
                ..p.clone()
            })
            .collect(),
        op: t.op,
    }
}

/// The form two queries are compared in: literals and the limit value
/// replaced by placeholders, join conditions dropped, and select and group-by
/// lists treated as multisets. ORDER BY keeps its item order.
pub fn canonical(ast: &SqlAst) -> SqlAst {
    let mut items = ast.select.items.clone();
    items.sort_by_cached_key(value_text);
    let mut group_by = ast.group_by.clone();
    group_by.sort_by_cached_key(column_text);
    let masked = SqlAst {
        select: SelectClause {
            distinct: ast.select.distinct,
            items,
        },
        from: FromClause {
            tables: ast.from.tables.clone(),
            subquery: ast.from.subquery.as_deref().map(|q| Box::new(canonical(q))),
            join: None,
        },
        where_clause: ast.where_clause.as_ref().map(mask_tree),
        group_by,
        having: ast.having.as_ref().map(mask_tree),
        order_by: ast.order_by.clone(),
        limit: ast.limit.map(|_| 0),
        set_op: ast.set_op.as_ref().map(|s| SetOp {
            op: s.op,
            rhs: Box::new(canonical(&s.rhs)),
        }),
    };
    normalize(&masked)
}

/// True when every clause of `pred` matches `gold`, disregarding values.
pub fn exact_match(pred: &SqlAst, gold: &SqlAst) -> bool {
    canonical(pred) == canonical(gold)
}
