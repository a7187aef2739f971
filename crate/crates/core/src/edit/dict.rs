//! The keyed-map text form of a query used by the code style.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::SelectEntry;
use crate::ast::*;
use crate::normalize::normalize;
use crate::parser::{
    parse_column, parse_predicate, parse_select_entry, parse_value_expr, parse_with, ParseOptions,
};
use crate::schema::SchemaCatalog;
use crate::unparse::{
    column_text, predicate_text, select_entry_text, unparse_qualified, value_text,
};

#[derive(Debug, Error, PartialEq)]
pub enum DictError {
    #[error("malformed SQL dict: {0}")]
    Format(String),
    #[error("bad fragment `{fragment}` in SQL dict: {message}")]
    Fragment { fragment: String, message: String },
    #[error("SQL dict describes an invalid query: {0}")]
    Invalid(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictFrom {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    conditions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logical_operator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nested: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictTree {
    conditions: Vec<String>,
    #[serde(default = "and")]
    logical_operator: String,
}

fn and() -> String {
    "AND".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictOrder {
    columns: Vec<String>,
    #[serde(default = "asc")]
    order: String,
}

fn asc() -> String {
    "ASC".into()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictSetOp {
    operator: String,
    sql: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SqlDict {
    from: DictFrom,
    select: Vec<String>,
    #[serde(rename = "where", default, skip_serializing_if = "Option::is_none")]
    where_clause: Option<DictTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_by: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    having: Option<DictTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order_by: Option<DictOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    set_op: Option<DictSetOp>,
}

fn tree(t: &ConditionTree) -> DictTree {
    DictTree {
        conditions: t.conditions.iter().map(predicate_text).collect(),
        logical_operator: t.op.keyword().to_string(),
    }
}

/// Renders `ast` as pretty-printed JSON indented with tabs. Empty
/// clauses are left out.
pub fn render_sql_dict(ast: &SqlAst) -> String {
    let dict = SqlDict {
        from: DictFrom {
            tables: ast.from.tables.iter().map(|t| t.to_string()).collect(),
            conditions: ast
                .from
                .join
                .as_ref()
                .map(|j| j.conditions.iter().map(predicate_text).collect()),
            logical_operator: ast.from.join.as_ref().map(|j| j.op.keyword().to_string()),
            nested: ast.from.subquery.as_deref().map(unparse_qualified),
        },
        select: SelectEntry::list(&ast.select)
            .iter()
            .map(|e| select_entry_text(e.distinct, &e.expr))
            .collect(),
        where_clause: ast.where_clause.as_ref().map(tree),
        group_by: (!ast.group_by.is_empty())
            .then(|| ast.group_by.iter().map(column_text).collect()),
        having: ast.having.as_ref().map(tree),
        order_by: ast.order_by.as_ref().map(|o| DictOrder {
            columns: o.items.iter().map(value_text).collect(),
            order: o.direction.keyword().to_string(),
        }),
        limit: ast.limit,
        set_op: ast.set_op.as_ref().map(|s| DictSetOp {
            operator: s.op.keyword().to_string(),
            sql: unparse_qualified(&s.rhs),
        }),
    };
    let mut buf = Vec::new();
    let fmt = serde_json::ser::PrettyFormatter::with_indent(b"\t");
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    dict.serialize(&mut ser)
        .expect("dict serialization cannot fail");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

fn frag<T, E: std::fmt::Display>(text: &str, r: Result<T, E>) -> Result<T, DictError> {
    r.map_err(|e| DictError::Fragment {
        fragment: text.to_string(),
        message: e.to_string(),
    })
}

fn logical(s: &str) -> Result<LogicalOp, DictError> {
    match s.trim().to_ascii_uppercase().as_str() {
        "AND" => Ok(LogicalOp::And),
        "OR" => Ok(LogicalOp::Or),
        other => Err(DictError::Format(format!("logical operator `{other}`"))),
    }
}

fn parse_tree(t: &DictTree, opts: ParseOptions<'_>) -> Result<Option<ConditionTree>, DictError> {
    if t.conditions.is_empty() {
        return Ok(None);
    }
    Ok(Some(ConditionTree {
        conditions: t
            .conditions
            .iter()
            .map(|c| frag(c, parse_predicate(c, opts)))
            .collect::<Result<_, _>>()?,
        op: logical(&t.logical_operator)?,
    }))
}

/// Reads dict text back into a normalized tree.
pub fn parse_sql_dict(text: &str, catalog: Option<&SchemaCatalog>) -> Result<SqlAst, DictError> {
    let dict: SqlDict =
        serde_json::from_str(text.trim()).map_err(|e| DictError::Format(e.to_string()))?;
    let opts = ParseOptions {
        catalog,
        lenient: true,
        normalize: true,
    };
    let tables = dict
        .from
        .tables
        .iter()
        .map(|t| match catalog {
            Some(cat) => {
                cat.table(t)
                    .map(|tb| tb.name.clone())
                    .ok_or_else(|| DictError::Fragment {
                        fragment: t.clone(),
                        message: "unknown table".into(),
                    })
            }
            None => Ok(Ident::new(t.as_str())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let join = match &dict.from.conditions {
        Some(c) => parse_tree(
            &DictTree {
                conditions: c.clone(),
                logical_operator: dict.from.logical_operator.clone().unwrap_or_else(and),
            },
            opts,
        )?,
        None => None,
    };
    let subquery = dict
        .from
        .nested
        .as_ref()
        .map(|s| frag(s, parse_with(s, opts)).map(Box::new))
        .transpose()?;
    let entries = dict
        .select
        .iter()
        .map(|s| {
            frag(s, parse_select_entry(s, opts))
                .map(|(distinct, expr)| SelectEntry { distinct, expr })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let group_by = dict
        .group_by
        .iter()
        .flatten()
        .map(|c| frag(c, parse_column(c, opts)))
        .collect::<Result<Vec<_>, _>>()?;
    let order_by = match &dict.order_by {
        Some(o) if !o.columns.is_empty() => Some(OrderBy {
            items: o
                .columns
                .iter()
                .map(|c| frag(c, parse_value_expr(c, opts)))
                .collect::<Result<_, _>>()?,
            direction: match o.order.trim().to_ascii_uppercase().as_str() {
                "ASC" => OrderDirection::Asc,
                "DESC" => OrderDirection::Desc,
                other => return Err(DictError::Format(format!("order `{other}`"))),
            },
        }),
        _ => None,
    };
    let set_op = match &dict.set_op {
        Some(s) => Some(SetOp {
            op: SetOperator::from_keyword(s.operator.trim())
                .ok_or_else(|| DictError::Format(format!("set operator `{}`", s.operator)))?,
            rhs: Box::new(frag(&s.sql, parse_with(&s.sql, opts))?),
        }),
        None => None,
    };
    let ast = SqlAst {
        select: SelectEntry::clause(entries),
        from: FromClause {
            tables,
            subquery,
            join,
        },
        where_clause: dict
            .where_clause
            .as_ref()
            .map(|t| parse_tree(t, opts))
            .transpose()?
            .flatten(),
        group_by,
        having: dict
            .having
            .as_ref()
            .map(|t| parse_tree(t, opts))
            .transpose()?
            .flatten(),
        order_by,
        limit: dict.limit,
        set_op,
    };
    let ast = normalize(&ast);
    ast.check_invariants().map_err(DictError::Invalid)?;
    Ok(ast)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(sql: &str) -> SqlAst {
        parse_with(sql, ParseOptions::without_catalog()).unwrap()
    }

    #[test]
    fn order_by_dict_matches_prompt_layout() {
        let text = render_sql_dict(&p("SELECT * FROM party ORDER BY Number_of_hosts ASC"));
        let expected = "{\n\t\"from\": {\n\t\t\"tables\": [\n\t\t\t\"party\"\n\t\t]\n\t},\n\t\"select\": [\n\t\t\"*\"\n\t],\n\t\"order_by\": {\n\t\t\"columns\": [\n\t\t\t\"party.Number_of_hosts\"\n\t\t],\n\t\t\"order\": \"ASC\"\n\t}\n}";
        assert_eq!(text, expected);
    }

    #[test]
    fn minimal_query_has_only_from_and_select() {
        let v: serde_json::Value =
            serde_json::from_str(&render_sql_dict(&p("SELECT * FROM t"))).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys.len(), 2);
    }

    #[test]
    fn round_trips() {
        for sql in [
            "SELECT DISTINCT t.a, COUNT(*) FROM t JOIN s ON t.id = s.id WHERE t.b = 'x' OR s.c > 2 GROUP BY t.a HAVING COUNT(*) > 1 ORDER BY COUNT(*) DESC LIMIT 3",
            "SELECT t.a FROM t EXCEPT SELECT s.a FROM s",
            "SELECT COUNT(*) FROM (SELECT t.a FROM t GROUP BY t.a)",
        ] {
            let ast = p(sql);
            assert_eq!(parse_sql_dict(&render_sql_dict(&ast), None).unwrap(), ast, "{sql}");
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            parse_sql_dict("{", None),
            Err(DictError::Format(_))
        ));
        assert!(matches!(
            parse_sql_dict(r#"{"from": {"tables": ["t"]}, "select": []}"#, None),
            Err(DictError::Invalid(_))
        ));
    }
}
