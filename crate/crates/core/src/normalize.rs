//! Canonical form for order-insensitive parts of a query.
//!
//! FROM tables and the predicates of every condition clause carry no
//! meaningful order, so they are sorted; `a = b` column equalities are
//! oriented with the smaller side first. SELECT, GROUP BY and ORDER BY lists
//! keep their order.

use crate::ast::*;
use crate::unparse::{predicate_text, value_text};

pub fn normalize(ast: &SqlAst) -> SqlAst {
    let mut out = ast.clone();
    normalize_in_place(&mut out);
    out
}

/// Structural equality up to normalization.
pub fn ast_equal(a: &SqlAst, b: &SqlAst) -> bool {
    normalize(a) == normalize(b)
}

pub fn normalize_predicate(p: &Predicate) -> Predicate {
    let mut p = p.clone();
    predicate_in_place(&mut p);
    p
}

pub fn normalize_tree(t: &ConditionTree) -> ConditionTree {
    let mut t = t.clone();
    tree_in_place(&mut t);
    t
}

fn normalize_in_place(ast: &mut SqlAst) {
    ast.from.tables.sort();
    if let Some(sub) = &mut ast.from.subquery {
        normalize_in_place(sub);
    }
    for tree in [&mut ast.from.join, &mut ast.where_clause, &mut ast.having]
        .into_iter()
        .flatten()
    {
        tree_in_place(tree);
    }
    if let Some(s) = &mut ast.set_op {
        normalize_in_place(&mut s.rhs);
    }
}

fn tree_in_place(t: &mut ConditionTree) {
    for p in &mut t.conditions {
        predicate_in_place(p);
    }
    t.conditions.sort_by_cached_key(sort_key);
    if t.conditions.len() <= 1 {
        t.op = LogicalOp::And;
    }
}

/// Sort key for a predicate: its qualified text, case-folded first.
pub fn sort_key(p: &Predicate) -> (String, String) {
    let text = predicate_text(p);
    (text.to_lowercase(), text)
}

fn is_plain_column(v: &ValueExpr) -> bool {
    v.rhs.is_none() && v.lhs.agg.is_none() && !v.lhs.distinct
}

fn predicate_in_place(p: &mut Predicate) {
    for o in [&mut p.rhs].into_iter().chain(p.rhs2.as_mut()) {
        if let Operand::Subquery(q) = o {
            normalize_in_place(q);
        }
    }
    if p.op == CompareOp::Eq && !p.negated && is_plain_column(&p.lhs) {
        if let Operand::Column(r) = &p.rhs {
            if is_plain_column(r) {
                let (l, rt) = (value_text(&p.lhs), value_text(r));
                if (rt.to_lowercase(), &rt) < (l.to_lowercase(), &l) {
                    let r = r.clone();
                    p.rhs = Operand::Column(std::mem::replace(&mut p.lhs, r));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_with, ParseOptions};
    use crate::unparse::unparse;

    fn raw(sql: &str) -> SqlAst {
        parse_with(
            sql,
            ParseOptions {
                normalize: false,
                ..ParseOptions::without_catalog()
            },
        )
        .unwrap()
    }

    #[test]
    fn sorts_conditions_and_tables() {
        let a = raw("SELECT t.x FROM t WHERE t.b = 2 AND t.a = 1");
        let n = normalize(&a);
        assert_eq!(unparse(&n), "SELECT x FROM t WHERE a = 1 AND b = 2");
        assert!(ast_equal(
            &a,
            &raw("SELECT t.x FROM t WHERE t.a = 1 AND t.b = 2")
        ));
        assert!(ast_equal(
            &raw("SELECT s.x FROM t JOIN s ON t.id = s.id"),
            &raw("SELECT s.x FROM s JOIN t ON s.id = t.id"),
        ));
    }

    #[test]
    fn keeps_select_order() {
        assert!(!ast_equal(
            &raw("SELECT t.a, t.b FROM t"),
            &raw("SELECT t.b, t.a FROM t")
        ));
    }

    #[test]
    fn is_idempotent() {
        let a = raw("SELECT t.x FROM t WHERE t.b = 2 OR t.a IN (SELECT s.a FROM s WHERE s.z = 1 AND s.y = 2)");
        let n = normalize(&a);
        assert_eq!(normalize(&n), n);
    }
}
