//! Rendering trees back to SQL text.
//!
//! Two styles exist. The display style is what a person or a database reads:
//! multi-table queries get `T1..Tn` aliases and single-table queries use bare
//! column names. The qualified style writes `table.column` everywhere with no
//! aliases; it is the form used for edit arguments and sort keys, because a
//! fragment rendered that way means the same thing wherever it is moved.

use std::fmt;

use crate::ast::*;

/// Renders `ast` in display style.
pub fn unparse(ast: &SqlAst) -> String {
    let mut out = String::new();
    query(&mut out, ast, false);
    out
}

/// Renders `ast` with fully qualified columns and no aliases.
pub fn unparse_qualified(ast: &SqlAst) -> String {
    let mut out = String::new();
    query(&mut out, ast, true);
    out
}

pub fn column_text(c: &ColumnRef) -> String {
    Level::qualified().column(c)
}

pub fn value_text(v: &ValueExpr) -> String {
    Level::qualified().value(v)
}

pub fn predicate_text(p: &Predicate) -> String {
    let mut out = String::new();
    Level::qualified().predicate(&mut out, p);
    out
}

/// A select-list entry, with the query's DISTINCT written in front when set.
pub fn select_entry_text(distinct: bool, v: &ValueExpr) -> String {
    if distinct {
        format!("DISTINCT {}", value_text(v))
    } else {
        value_text(v)
    }
}

pub fn literal_text(l: &Literal) -> String {
    match l.quote {
        Some(q) => format!("{q}{}{q}", l.text),
        None => l.text.clone(),
    }
}

impl fmt::Display for SqlAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&unparse(self))
    }
}

struct Level<'a> {
    qualified: bool,
    tables: &'a [Ident],
}

impl<'a> Level<'a> {
    fn qualified() -> Level<'static> {
        Level {
            qualified: true,
            tables: &[],
        }
    }

    fn column(&self, c: &ColumnRef) -> String {
        let Some(table) = &c.table else {
            return c.column.to_string();
        };
        if self.qualified {
            return format!("{table}.{}", c.column);
        }
        match self.tables.iter().position(|t| t == table) {
            Some(i) if self.tables.len() > 1 => format!("T{}.{}", i + 1, c.column),
            Some(_) => c.column.to_string(),
            None => format!("{table}.{}", c.column),
        }
    }

    fn unit(&self, u: &ColUnit) -> String {
        let col = self.column(&u.column);
        match u.agg {
            Some(a) if u.distinct => format!("{}(DISTINCT {col})", a.keyword()),
            Some(a) => format!("{}({col})", a.keyword()),
            None if u.distinct => format!("DISTINCT {col}"),
            None => col,
        }
    }

    fn value(&self, v: &ValueExpr) -> String {
        match &v.rhs {
            Some((op, r)) => format!("{} {} {}", self.unit(&v.lhs), op.symbol(), self.unit(r)),
            None => self.unit(&v.lhs),
        }
    }

    fn operand(&self, out: &mut String, o: &Operand) {
        match o {
            Operand::Literal(l) => out.push_str(&literal_text(l)),
            Operand::Column(v) => out.push_str(&self.value(v)),
            Operand::Subquery(q) => {
                out.push('(');
                query(out, q, self.qualified);
                out.push(')');
            }
        }
    }

    fn predicate(&self, out: &mut String, p: &Predicate) {
        out.push_str(&self.value(&p.lhs));
        out.push(' ');
        match (p.op, p.negated) {
            (CompareOp::Is, true) => out.push_str("IS NOT"),
            (op, true) => {
                out.push_str("NOT ");
                out.push_str(op.symbol());
            }
            (op, false) => out.push_str(op.symbol()),
        }
        out.push(' ');
        self.operand(out, &p.rhs);
        if let Some(r2) = &p.rhs2 {
            out.push_str(" AND ");
            self.operand(out, r2);
        }
    }

    fn tree(&self, out: &mut String, t: &ConditionTree) {
        let sep = format!(" {} ", t.op.keyword());
        for (i, p) in t.conditions.iter().enumerate() {
            if i > 0 {
                out.push_str(&sep);
            }
            self.predicate(out, p);
        }
    }
}

fn query(out: &mut String, ast: &SqlAst, qualified: bool) {
    let level = Level {
        qualified,
        tables: &ast.from.tables,
    };
    out.push_str("SELECT ");
    if ast.select.distinct {
        out.push_str("DISTINCT ");
    }
    let items: Vec<String> = ast.select.items.iter().map(|v| level.value(v)).collect();
    out.push_str(&items.join(", "));

    out.push_str(" FROM ");
    let mut units: Vec<String> = Vec::new();
    if let Some(sub) = &ast.from.subquery {
        let mut s = String::from("(");
        query(&mut s, sub, qualified);
        s.push(')');
        units.push(s);
    }
    let aliased = !qualified && ast.from.tables.len() > 1;
    for (i, t) in ast.from.tables.iter().enumerate() {
        if aliased {
            units.push(format!("{t} AS T{}", i + 1));
        } else {
            units.push(t.to_string());
        }
    }
    out.push_str(&units.join(" JOIN "));
    if let Some(j) = &ast.from.join {
        out.push_str(" ON ");
        level.tree(out, j);
    }
    if let Some(w) = &ast.where_clause {
        out.push_str(" WHERE ");
        level.tree(out, w);
    }
    if !ast.group_by.is_empty() {
        let cols: Vec<String> = ast.group_by.iter().map(|c| level.column(c)).collect();
        out.push_str(" GROUP BY ");
        out.push_str(&cols.join(", "));
    }
    if let Some(h) = &ast.having {
        out.push_str(" HAVING ");
        level.tree(out, h);
    }
    if let Some(o) = &ast.order_by {
        let items: Vec<String> = o.items.iter().map(|v| level.value(v)).collect();
        out.push_str(" ORDER BY ");
        out.push_str(&items.join(", "));
        out.push(' ');
        out.push_str(o.direction.keyword());
    }
    if let Some(n) = ast.limit {
        out.push_str(&format!(" LIMIT {n}"));
    }
    if let Some(s) = &ast.set_op {
        out.push(' ');
        out.push_str(s.op.keyword());
        out.push(' ');
        query(out, &s.rhs, qualified);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_with, ParseOptions};

    fn p(sql: &str) -> SqlAst {
        parse_with(sql, ParseOptions::without_catalog()).unwrap()
    }

    #[test]
    fn single_table_uses_bare_columns() {
        assert_eq!(
            unparse(&p(
                "select count(*) from party order by party.Number_of_hosts"
            )),
            "SELECT COUNT(*) FROM party ORDER BY Number_of_hosts ASC"
        );
    }

    #[test]
    fn joins_get_positional_aliases() {
        let ast = p("SELECT h.Name FROM party_host AS ph JOIN host AS h ON ph.Host_ID = h.Host_ID WHERE h.Age > 30");
        assert_eq!(
            unparse(&ast),
            "SELECT T1.Name FROM host AS T1 JOIN party_host AS T2 ON T1.Host_ID = T2.Host_ID WHERE T1.Age > 30"
        );
        assert_eq!(
            unparse_qualified(&ast),
            "SELECT host.Name FROM host JOIN party_host ON host.Host_ID = party_host.Host_ID WHERE host.Age > 30"
        );
    }

    #[test]
    fn negations_render_in_sql_order() {
        let ast = p(
            "SELECT a FROM t WHERE b IS NOT NULL AND c NOT LIKE '%x%' AND d NOT BETWEEN 1 AND 2",
        );
        let s = unparse(&ast);
        assert!(s.contains("b IS NOT NULL"), "{s}");
        assert!(s.contains("c NOT LIKE '%x%'"), "{s}");
        assert!(s.contains("d NOT BETWEEN 1 AND 2"), "{s}");
    }
}
