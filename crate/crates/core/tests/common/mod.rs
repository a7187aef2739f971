//! Seeded random query generator shared by the property tests.
#![allow(dead_code)]

use coesql_core::ast::*;
use coesql_core::normalize::normalize;
use coesql_core::schema::{Column, ColumnType, SchemaCatalog, Table};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TABLES: [&str; 3] = ["singer", "concert", "stadium"];
pub const COLUMNS: [&str; 4] = ["id", "name", "age", "capacity"];

pub fn catalog() -> SchemaCatalog {
    let tables = TABLES
        .iter()
        .map(|t| Table {
            name: Ident::new(*t),
            columns: COLUMNS
                .iter()
                .map(|c| Column {
                    name: Ident::new(*c),
                    ty: if *c == "name" {
                        ColumnType::Text
                    } else {
                        ColumnType::Number
                    },
                })
                .collect(),
        })
        .collect();
    SchemaCatalog::new("gen", tables, vec![], vec![]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
}

impl Gen<'_> {
    fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    fn column(&mut self, tables: &[Ident]) -> ColumnRef {
        let t = tables.choose(self.rng).unwrap().clone();
        ColumnRef {
            table: Some(t),
            column: Ident::new(*COLUMNS.choose(self.rng).unwrap()),
        }
    }

    fn unit(&mut self, tables: &[Ident], allow_agg: bool) -> ColUnit {
        if allow_agg && self.chance(0.3) {
            if self.chance(0.3) {
                return ColUnit::aggregated(Aggregate::Count, ColumnRef::star());
            }
            let agg = *Aggregate::ALL.choose(self.rng).unwrap();
            return ColUnit {
                agg: Some(agg),
                distinct: agg == Aggregate::Count && self.chance(0.2),
                column: self.column(tables),
            };
        }
        ColUnit::column(self.column(tables))
    }

    fn value(&mut self, tables: &[Ident], allow_agg: bool) -> ValueExpr {
        let lhs = self.unit(tables, allow_agg);
        let rhs = if self.chance(0.1) {
            let op = *[ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div]
                .choose(self.rng)
                .unwrap();
            Some((op, ColUnit::column(self.column(tables))))
        } else {
            None
        };
        ValueExpr { lhs, rhs }
    }

    fn literal(&mut self) -> Literal {
        if self.chance(0.5) {
            Literal::number(self.rng.gen_range(0..100).to_string())
        } else {
            let words = ["Alberta", "x", "Hemkade 48", "O''Neil", "%a%"];
            Literal {
                text: words.choose(self.rng).unwrap().to_string(),
                quote: Some(if self.chance(0.5) { '\'' } else { '"' }),
            }
        }
    }

    fn predicate(&mut self, tables: &[Ident], allow_agg: bool, depth: u32) -> Predicate {
        let lhs = self.value(tables, allow_agg);
        let roll = self.rng.gen_range(0..10);
        match roll {
            0 if depth == 0 => {
                let sub = self.query(1, false);
                Predicate {
                    lhs,
                    negated: self.chance(0.5),
                    op: CompareOp::In,
                    rhs: Operand::Subquery(Box::new(SqlAst {
                        select: SelectClause {
                            distinct: false,
                            items: vec![sub.select.items[0].clone()],
                        },
                        ..sub
                    })),
                    rhs2: None,
                }
            }
            1 => Predicate {
                lhs,
                negated: self.chance(0.3),
                op: CompareOp::Between,
                rhs: Operand::Literal(Literal::number(self.rng.gen_range(0..10).to_string())),
                rhs2: Some(Operand::Literal(Literal::number(
                    self.rng.gen_range(10..20).to_string(),
                ))),
            },
            2 => Predicate {
                lhs,
                negated: self.chance(0.3),
                op: CompareOp::Like,
                rhs: Operand::Literal(Literal::string("%a%")),
                rhs2: None,
            },
            3 => Predicate {
                lhs,
                negated: self.chance(0.5),
                op: CompareOp::Is,
                rhs: Operand::Literal(Literal::number("NULL")),
                rhs2: None,
            },
            _ => {
                let op = *[
                    CompareOp::Eq,
                    CompareOp::Ne,
                    CompareOp::Lt,
                    CompareOp::Gt,
                    CompareOp::Le,
                    CompareOp::Ge,
                ]
                .choose(self.rng)
                .unwrap();
                Predicate::new(lhs, op, Operand::Literal(self.literal()))
            }
        }
    }

    fn tree(
        &mut self,
        tables: &[Ident],
        allow_agg: bool,
        depth: u32,
        max: usize,
    ) -> Option<ConditionTree> {
        let n = self.rng.gen_range(0..=max);
        if n == 0 {
            return None;
        }
        let conditions = (0..n)
            .map(|_| self.predicate(tables, allow_agg, depth))
            .collect();
        Some(ConditionTree {
            conditions,
            op: if self.chance(0.3) {
                LogicalOp::Or
            } else {
                LogicalOp::And
            },
        })
    }

    fn query(&mut self, depth: u32, allow_set: bool) -> SqlAst {
        if depth == 0 && self.chance(0.08) {
            return self.nested_from_query();
        }
        let n_tables = *[1, 1, 1, 2, 2, 3].choose(self.rng).unwrap();
        let mut names: Vec<&str> = TABLES.to_vec();
        names.shuffle(self.rng);
        let tables: Vec<Ident> = names[..n_tables].iter().map(|t| Ident::new(*t)).collect();
        let join = if n_tables > 1 {
            let conds: Vec<Predicate> = (1..n_tables)
                .filter(|_| self.chance(0.8))
                .map(|i| {
                    Predicate::new(
                        ValueExpr::column(ColumnRef {
                            table: Some(tables[i - 1].clone()),
                            column: Ident::new("id"),
                        }),
                        CompareOp::Eq,
                        Operand::Column(ValueExpr::column(ColumnRef {
                            table: Some(tables[i].clone()),
                            column: Ident::new("id"),
                        })),
                    )
                })
                .collect();
            (!conds.is_empty()).then(|| ConditionTree {
                op: if conds.len() > 1 && self.chance(0.1) {
                    LogicalOp::Or
                } else {
                    LogicalOp::And
                },
                conditions: conds,
            })
        } else {
            None
        };
        let n_items = self.rng.gen_range(1..=3);
        let items: Vec<ValueExpr> = if self.chance(0.15) {
            vec![ValueExpr::column(ColumnRef::star())]
        } else {
            (0..n_items).map(|_| self.value(&tables, true)).collect()
        };
        let where_clause = self.tree(&tables, false, depth, 3);
        let group_by: Vec<ColumnRef> = if self.chance(0.3) {
            (0..self.rng.gen_range(1..=2))
                .map(|_| self.column(&tables))
                .collect()
        } else {
            Vec::new()
        };
        let having = if group_by.is_empty() {
            None
        } else {
            self.tree(&tables, true, 1, 2)
        };
        let order_by = if self.chance(0.35) {
            Some(OrderBy {
                items: (0..self.rng.gen_range(1..=2))
                    .map(|_| self.value(&tables, true))
                    .collect(),
                direction: if self.chance(0.5) {
                    OrderDirection::Asc
                } else {
                    OrderDirection::Desc
                },
            })
        } else {
            None
        };
        let limit = self.chance(0.25).then(|| self.rng.gen_range(1..6));
        let set_op = if allow_set && depth == 0 && self.chance(0.12) {
            let op = *SetOperator::ALL.choose(self.rng).unwrap();
            Some(SetOp {
                op,
                rhs: Box::new(self.query(1, false)),
            })
        } else {
            None
        };
        SqlAst {
            select: SelectClause {
                distinct: self.chance(0.15),
                items,
            },
            from: FromClause {
                tables,
                subquery: None,
                join,
            },
            where_clause,
            group_by,
            having,
            order_by,
            limit,
            set_op,
        }
    }

    fn nested_from_query(&mut self) -> SqlAst {
        let inner = self.query(1, false);
        let derived = |name: &str| ColumnRef {
            table: None,
            column: Ident::new(name),
        };
        let mut q = SqlAst::simple(
            vec![if self.chance(0.5) {
                ValueExpr::unit(ColUnit::aggregated(Aggregate::Count, ColumnRef::star()))
            } else {
                ValueExpr::column(derived("age"))
            }],
            FromClause {
                tables: vec![],
                subquery: Some(Box::new(inner)),
                join: None,
            },
        );
        if self.chance(0.4) {
            q.where_clause = Some(ConditionTree::single(Predicate::new(
                ValueExpr::column(derived("age")),
                CompareOp::Gt,
                Operand::Literal(Literal::number("3")),
            )));
        }
        q
    }

    /// A variant of `base` with a few clauses regenerated.
    fn mutate(&mut self, base: &SqlAst) -> SqlAst {
        let fresh = self.query(0, true);
        let mut out = base.clone();
        let compatible = fresh.from.tables == base.from.tables && base.from.subquery.is_none();
        let mut touched = false;
        while !touched {
            if self.chance(0.3) {
                out.from = fresh.from.clone();
                out.select = fresh.select.clone();
                out.where_clause = fresh.where_clause.clone();
                out.group_by = fresh.group_by.clone();
                out.having = fresh.having.clone();
                out.order_by = fresh.order_by.clone();
                touched = true;
            }
            if compatible || out.from == fresh.from {
                if self.chance(0.4) {
                    out.select = fresh.select.clone();
                    touched = true;
                }
                if self.chance(0.4) {
                    out.where_clause = fresh.where_clause.clone();
                    touched = true;
                }
                if self.chance(0.3) {
                    out.order_by = fresh.order_by.clone();
                    touched = true;
                }
            }
            if self.chance(0.3) {
                out.limit = fresh.limit;
                touched = true;
            }
            if self.chance(0.2) {
                out.set_op = fresh.set_op.clone();
                touched = true;
            }
            if self.chance(0.1) {
                // swap sides of a set operation, or wrap
                let body = out.body();
                out = match &base.set_op {
                    Some(s) => SqlAst {
                        set_op: Some(SetOp {
                            op: s.op,
                            rhs: Box::new(body),
                        }),
                        ..(*s.rhs).clone()
                    },
                    None => SqlAst {
                        set_op: Some(SetOp {
                            op: SetOperator::Union,
                            rhs: Box::new(body),
                        }),
                        ..fresh.body()
                    },
                };
                touched = true;
            }
        }
        if out.having.is_some() && out.group_by.is_empty() {
            out.having = None;
        }
        out
    }
}

/// A random query satisfying the tree invariants, normalized.
pub fn gen_ast(seed: u64) -> SqlAst {
    let mut r = rng(seed);
    let q = Gen { rng: &mut r }.query(0, true);
    normalize(&q)
}

/// A pair of queries, usually related by a few clause changes.
pub fn gen_pair(seed: u64) -> (SqlAst, SqlAst) {
    let mut r = rng(seed);
    let mut g = Gen { rng: &mut r };
    let a = g.query(0, true);
    let b = if g.chance(0.2) {
        g.query(0, true)
    } else {
        g.mutate(&a)
    };
    (normalize(&a), normalize(&b))
}

pub fn fixtures() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
