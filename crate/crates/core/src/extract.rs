//! Edit-chain extraction by field-wise comparison of two trees, choice of
//! the source turn, and corpus coverage statistics.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::*;
use crate::edit::{edit_phrase, EditChain, Heading, RuleTag, SelectEntry, Side, UnitEdit};
use crate::normalize::normalize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenCounter {
    /// Whitespace-separated words of the plain-English edit phrases.
    #[default]
    Whitespace,
    /// Characters of the plain-English edit phrases.
    RenderedChars,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    /// Longest chain (in unit edits) that may be used.
    pub max_chain_len: usize,
    pub rule_subset: BTreeSet<RuleTag>,
    pub token_counter: TokenCounter,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("maximum chain length must be at least 1")]
    ZeroLength,
    #[error("rule subset is empty")]
    NoRules,
}

impl ExtractionConfig {
    pub fn new(max_chain_len: usize, rule_subset: BTreeSet<RuleTag>) -> Result<Self, ConfigError> {
        if max_chain_len == 0 {
            return Err(ConfigError::ZeroLength);
        }
        if rule_subset.is_empty() {
            return Err(ConfigError::NoRules);
        }
        Ok(ExtractionConfig {
            max_chain_len,
            rule_subset,
            token_counter: TokenCounter::Whitespace,
        })
    }

    pub fn all_rules(max_chain_len: usize) -> Self {
        ExtractionConfig::new(max_chain_len, RuleTag::ALL.into_iter().collect()).expect("non-empty")
    }

    /// Length limit used for SParC.
    pub fn sparc() -> Self {
        ExtractionConfig::all_rules(4)
    }

    /// Length limit used for CoSQL.
    pub fn cosql() -> Self {
        ExtractionConfig::all_rules(3)
    }

    pub fn unbounded() -> Self {
        ExtractionConfig::all_rules(usize::MAX)
    }
}

/// Rule subsets compared in coverage sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleGroup {
    /// SELECT and WHERE rules.
    SelectWhere,
    /// FROM, SELECT and WHERE rules.
    FromSelectWhere,
    All,
}

impl RuleGroup {
    pub const ALL: [RuleGroup; 3] = [
        RuleGroup::SelectWhere,
        RuleGroup::FromSelectWhere,
        RuleGroup::All,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RuleGroup::SelectWhere => "S+W",
            RuleGroup::FromSelectWhere => "F+S+W",
            RuleGroup::All => "all",
        }
    }

    pub fn rules(self) -> BTreeSet<RuleTag> {
        let headings: &[Heading] = match self {
            RuleGroup::SelectWhere => &[Heading::Select, Heading::Where],
            RuleGroup::FromSelectWhere => &[Heading::From, Heading::Select, Heading::Where],
            RuleGroup::All => &Heading::ALL,
        };
        RuleTag::ALL
            .into_iter()
            .filter(|t| headings.contains(&t.heading()))
            .collect()
    }
}

impl std::str::FromStr for RuleGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s+w" | "sw" | "select-where" => Ok(RuleGroup::SelectWhere),
            "f+s+w" | "fsw" | "from-select-where" => Ok(RuleGroup::FromSelectWhere),
            "all" => Ok(RuleGroup::All),
            other => Err(format!(
                "unknown rule group `{other}` (expected S+W, F+S+W or all)"
            )),
        }
    }
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig::sparc()
    }
}

/// The pair needs a rule outside the enabled subset.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("uneditable: needs {}", .missing.iter().map(|t| t.name()).collect::<Vec<_>>().join(", "))]
pub struct Uneditable {
    pub missing: Vec<RuleTag>,
}

/// Edit chain from `old` to `new` restricted to `config.rule_subset`. The
/// returned chain has no source turn set.
pub fn extract_chain(
    old: &SqlAst,
    new: &SqlAst,
    config: &ExtractionConfig,
) -> Result<EditChain, Uneditable> {
    let edits = diff(old, new);
    let missing: BTreeSet<RuleTag> = edits
        .iter()
        .map(UnitEdit::tag)
        .filter(|t| !config.rule_subset.contains(t))
        .collect();
    if missing.is_empty() {
        Ok(EditChain::edited(None, edits))
    } else {
        Err(Uneditable {
            missing: missing.into_iter().collect(),
        })
    }
}

/// The unrestricted edit list turning `old` into `new`.
pub fn diff(old: &SqlAst, new: &SqlAst) -> Vec<UnitEdit> {
    let old = normalize(old);
    let new = normalize(new);
    let mut edits = Vec::new();
    match (&old.set_op, &new.set_op) {
        (None, None) => body_diff(&old, &new, &mut edits),
        (None, Some(s)) => {
            let body = new.body();
            if *s.rhs == old && body != old {
                return vec![UnitEdit::Iue {
                    op: s.op,
                    side: Side::Left,
                    sql: Some(Box::new(body)),
                }];
            }
            body_diff(&old, &body, &mut edits);
            edits.push(UnitEdit::Iue {
                op: s.op,
                side: Side::Right,
                sql: Some(s.rhs.clone()),
            });
        }
        (Some(s), None) => {
            let body = old.body();
            if *s.rhs == new && body != new {
                return vec![UnitEdit::Iue {
                    op: s.op,
                    side: Side::Left,
                    sql: None,
                }];
            }
            body_diff(&body, &new, &mut edits);
            edits.push(UnitEdit::Iue {
                op: s.op,
                side: Side::Right,
                sql: None,
            });
        }
        (Some(a), Some(b)) => {
            body_diff(&old.body(), &new.body(), &mut edits);
            if a != b {
                edits.push(UnitEdit::Iue {
                    op: b.op,
                    side: Side::Right,
                    sql: Some(b.rhs.clone()),
                });
            }
        }
    }
    edits
}

type Pair<T> = (Option<T>, Option<T>);

/// Multiset alignment: equal items first, leftovers paired in order as
/// changes, the surplus as adds or deletes. Returns changes, adds, deletes.
fn set_diff<T: Clone + PartialEq>(old: &[T], new: &[T]) -> Vec<Pair<T>> {
    let mut used = vec![false; old.len()];
    let mut new_rest = Vec::new();
    for n in new {
        match (0..old.len()).find(|&i| !used[i] && old[i] == *n) {
            Some(i) => used[i] = true,
            None => new_rest.push(n.clone()),
        }
    }
    let old_rest: Vec<T> = old
        .iter()
        .zip(&used)
        .filter(|(_, u)| !**u)
        .map(|(o, _)| o.clone())
        .collect();
    let paired = old_rest.len().min(new_rest.len());
    let mut out: Vec<Pair<T>> = Vec::new();
    for i in 0..paired {
        out.push((Some(old_rest[i].clone()), Some(new_rest[i].clone())));
    }
    out.extend(new_rest[paired..].iter().map(|n| (None, Some(n.clone()))));
    out.extend(old_rest[paired..].iter().map(|o| (Some(o.clone()), None)));
    out
}

/// Alignment for lists whose order matters. A change keeps the position of
/// the item it replaces, additions go to the end and deletions remove the
/// first equal item, so the target must be reached as
/// `[aligned old positions] ++ [additions]`. The prefix alignment with the
/// fewest edits is found by dynamic programming and checked by replaying it;
/// if the replay disagrees (possible with duplicate items) the whole list is
/// rewritten instead.
fn ordered_diff<T: Clone + PartialEq>(old: &[T], new: &[T]) -> Vec<Pair<T>> {
    if old == new {
        return Vec::new();
    }
    let (n, m) = (old.len(), new.len());
    const INF: usize = usize::MAX / 4;
    // f[i][k]: fewest changes aligning new[..k] into old[..i]
    let mut f = vec![vec![INF; m + 1]; n + 1];
    for row in f.iter_mut() {
        row[0] = 0;
    }
    for i in 1..=n {
        for k in 1..=m.min(i) {
            let skip = f[i - 1][k];
            let take = f[i - 1][k - 1].saturating_add(usize::from(old[i - 1] != new[k - 1]));
            f[i][k] = skip.min(take);
        }
    }
    let mut best_p = 0;
    let mut best_cost = INF;
    for (p, &aligned_cost) in f[n].iter().enumerate().take(m.min(n) + 1) {
        if aligned_cost >= INF {
            continue;
        }
        let cost = aligned_cost + (m - p) + (n - p);
        if cost <= best_cost {
            best_cost = cost;
            best_p = p;
        }
    }
    let mut aligned = vec![None; n];
    let (mut i, mut k) = (n, best_p);
    while k > 0 {
        let cost = usize::from(old[i - 1] != new[k - 1]);
        let take = f[i - 1][k - 1].saturating_add(cost);
        let can_skip = i > k && f[i - 1][k] == f[i][k];
        if take == f[i][k] && (cost == 0 || !can_skip) {
            aligned[i - 1] = Some(k - 1);
            k -= 1;
        }
        i -= 1;
    }
    let mut ops: Vec<Pair<T>> = Vec::new();
    for (i, a) in aligned.iter().enumerate() {
        if let Some(k) = a {
            if old[i] != new[*k] {
                ops.push((Some(old[i].clone()), Some(new[*k].clone())));
            }
        }
    }
    ops.extend(new[best_p..].iter().map(|x| (None, Some(x.clone()))));
    for (i, a) in aligned.iter().enumerate() {
        if a.is_none() {
            ops.push((Some(old[i].clone()), None));
        }
    }
    if replay(old, &ops).as_deref() == Some(new) {
        return ops;
    }
    new.iter()
        .map(|x| (None, Some(x.clone())))
        .chain(old.iter().map(|x| (Some(x.clone()), None)))
        .collect()
}

fn replay<T: Clone + PartialEq>(start: &[T], ops: &[Pair<T>]) -> Option<Vec<T>> {
    let mut list = start.to_vec();
    for (o, n) in ops {
        match (o, n) {
            (None, Some(n)) => list.push(n.clone()),
            (Some(o), n) => {
                let i = list.iter().position(|x| x == o)?;
                match n {
                    Some(n) => list[i] = n.clone(),
                    None => {
                        list.remove(i);
                    }
                }
            }
            (None, None) => {}
        }
    }
    Some(list)
}

fn conditions(t: &Option<ConditionTree>) -> &[Predicate] {
    t.as_ref().map(|t| t.conditions.as_slice()).unwrap_or(&[])
}

/// The operator edit needed after the condition list edits, if any.
fn op_edit(old: &Option<ConditionTree>, new: &Option<ConditionTree>) -> Option<LogicalOp> {
    let new = new.as_ref().filter(|t| t.conditions.len() >= 2)?;
    let current = match old {
        Some(t) if t.conditions.len() >= 2 => t.op,
        _ => LogicalOp::And,
    };
    (current != new.op).then_some(new.op)
}

fn is_delete<T>(p: &Pair<T>) -> bool {
    p.0.is_some() && p.1.is_none()
}

fn body_diff(old: &SqlAst, new: &SqlAst, out: &mut Vec<UnitEdit>) {
    // FROM
    if new.from.subquery.is_some() && old.from.subquery != new.from.subquery {
        out.push(UnitEdit::NestedFromClause(new.from.subquery.clone()));
    }
    for (old, new) in set_diff(&old.from.tables, &new.from.tables) {
        out.push(UnitEdit::FromTable { old, new });
    }
    for (old, new) in set_diff(conditions(&old.from.join), conditions(&new.from.join)) {
        out.push(UnitEdit::JoinCondition { old, new });
    }
    if let Some(op) = op_edit(&old.from.join, &new.from.join) {
        out.push(UnitEdit::JoinLogicalOperator(op));
    }
    if old.from.subquery.is_some() && new.from.subquery.is_none() {
        out.push(UnitEdit::NestedFromClause(None));
    }

    // SELECT
    for (old, new) in ordered_diff(
        &SelectEntry::list(&old.select),
        &SelectEntry::list(&new.select),
    ) {
        out.push(UnitEdit::SelectItem { old, new });
    }

    // WHERE
    for (old, new) in set_diff(conditions(&old.where_clause), conditions(&new.where_clause)) {
        out.push(UnitEdit::WhereCondition { old, new });
    }
    if let Some(op) = op_edit(&old.where_clause, &new.where_clause) {
        out.push(UnitEdit::WhereLogicalOperator(op));
    }

    // GROUP BY and HAVING; group deletions wait until HAVING is settled
    let (group_deletes, group_rest): (Vec<_>, Vec<_>) = ordered_diff(&old.group_by, &new.group_by)
        .into_iter()
        .partition(is_delete);
    for (old, new) in group_rest {
        out.push(UnitEdit::GroupByColumn { old, new });
    }
    for (old, new) in set_diff(conditions(&old.having), conditions(&new.having)) {
        out.push(UnitEdit::HavingCondition { old, new });
    }
    if let Some(op) = op_edit(&old.having, &new.having) {
        out.push(UnitEdit::HavingLogicalOperator(op));
    }
    for (old, new) in group_deletes {
        out.push(UnitEdit::GroupByColumn { old, new });
    }

    // ORDER BY
    let items = |o: &Option<OrderBy>| o.as_ref().map(|o| o.items.clone()).unwrap_or_default();
    for (old, new) in ordered_diff(&items(&old.order_by), &items(&new.order_by)) {
        out.push(UnitEdit::OrderByItem { old, new });
    }
    if let Some(n) = &new.order_by {
        if old.order_by.as_ref().map(|o| o.direction) != Some(n.direction) {
            out.push(UnitEdit::Order(n.direction));
        }
    }

    // LIMIT
    if old.limit != new.limit {
        out.push(UnitEdit::Limit {
            old: old.limit,
            new: new.limit,
        });
    }
}

/// Size of a chain under `counter`; direct chains count zero.
pub fn chain_tokens(chain: &EditChain, counter: TokenCounter) -> usize {
    chain
        .edits
        .iter()
        .map(|e| {
            let phrase = edit_phrase(e);
            match counter {
                TokenCounter::Whitespace => phrase.split_whitespace().count(),
                TokenCounter::RenderedChars => phrase.chars().count(),
            }
        })
        .sum()
}

/// Picks the earlier turn whose chain to `current` is shortest in tokens,
/// among chains within the length limit; ties go to the latest turn.
/// Returns a direct chain when nothing qualifies.
pub fn select_source(history: &[SqlAst], current: &SqlAst, config: &ExtractionConfig) -> EditChain {
    select_source_numbered(
        history.iter().enumerate().map(|(i, a)| (i + 1, a)),
        current,
        config,
    )
}

/// [`select_source`] over `(turn number, query)` pairs, for histories with
/// gaps.
pub fn select_source_numbered<'a>(
    history: impl IntoIterator<Item = (usize, &'a SqlAst)>,
    current: &SqlAst,
    config: &ExtractionConfig,
) -> EditChain {
    let mut best: Option<(usize, usize, EditChain)> = None;
    for (turn, prev) in history {
        let Ok(mut chain) = extract_chain(prev, current, config) else {
            continue;
        };
        if chain.len() > config.max_chain_len {
            continue;
        }
        let tokens = chain_tokens(&chain, config.token_counter);
        let better = match &best {
            None => true,
            Some((t, bt, _)) => tokens < *bt || (tokens == *bt && turn > *t),
        };
        if better {
            chain.source_turn = Some(turn);
            best = Some((turn, tokens, chain));
        }
    }
    best.map(|(_, _, c)| c).unwrap_or_else(EditChain::direct)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    /// Non-first turns with a parsed query.
    pub total_pairs: usize,
    pub editable_pairs: usize,
    pub coverage_ratio: f64,
    pub direct_count: usize,
    /// Chain length to number of editable turns.
    pub chain_length_histogram: BTreeMap<usize, usize>,
    /// Queries that failed to parse and were skipped.
    pub unparseable: usize,
}

impl CoverageStats {
    fn merge(mut self, other: CoverageStats) -> CoverageStats {
        self.total_pairs += other.total_pairs;
        self.editable_pairs += other.editable_pairs;
        self.direct_count += other.direct_count;
        self.unparseable += other.unparseable;
        for (k, v) in other.chain_length_histogram {
            *self.chain_length_histogram.entry(k).or_default() += v;
        }
        self
    }
}

/// Coverage of the rule subset over interactions. `None` entries are gold
/// queries that did not parse; they are counted and left out of histories.
pub fn coverage_stats(
    interactions: &[Vec<Option<SqlAst>>],
    config: &ExtractionConfig,
) -> CoverageStats {
    let mut stats = interactions
        .par_iter()
        .map(|turns| {
            let mut s = CoverageStats::default();
            let mut seen: Vec<(usize, &SqlAst)> = Vec::new();
            for (i, turn) in turns.iter().enumerate() {
                let Some(ast) = turn else {
                    s.unparseable += 1;
                    continue;
                };
                if i > 0 {
                    s.total_pairs += 1;
                    let chain = select_source_numbered(seen.iter().copied(), ast, config);
                    if chain.direct {
                        s.direct_count += 1;
                    } else {
                        s.editable_pairs += 1;
                        *s.chain_length_histogram.entry(chain.len()).or_default() += 1;
                    }
                }
                seen.push((i + 1, ast));
            }
            s
        })
        .reduce(CoverageStats::default, CoverageStats::merge);
    stats.coverage_ratio = if stats.total_pairs == 0 {
        0.0
    } else {
        stats.editable_pairs as f64 / stats.total_pairs as f64
    };
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::apply_chain;
    use crate::parser::{parse_with, ParseOptions};

    fn p(sql: &str) -> SqlAst {
        parse_with(sql, ParseOptions::without_catalog()).unwrap()
    }

    fn check(a: &str, b: &str) -> Vec<UnitEdit> {
        let (a, b) = (p(a), p(b));
        let edits = diff(&a, &b);
        let out = apply_chain(&a, &EditChain::edited(None, edits.clone())).unwrap();
        assert_eq!(out, normalize(&b));
        edits
    }

    #[test]
    fn equal_queries_need_nothing() {
        assert!(check(
            "SELECT t.a FROM t WHERE t.b = 1",
            "SELECT t.a FROM t WHERE t.b = 1"
        )
        .is_empty());
    }

    #[test]
    fn single_where_add() {
        let e = check("SELECT * FROM Stu", "SELECT * FROM Stu WHERE Stu.GPA > 3");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].tag(), RuleTag::WhereCondition);
    }

    #[test]
    fn order_by_added_with_direction() {
        let e = check(
            "SELECT * FROM party",
            "SELECT * FROM party ORDER BY party.Number_of_hosts",
        );
        assert_eq!(
            e.iter().map(UnitEdit::tag).collect::<Vec<_>>(),
            vec![RuleTag::OrderByItem, RuleTag::Order]
        );
    }

    #[test]
    fn many_clause_rewrite_round_trips() {
        check(
            "SELECT t.a, t.b FROM t WHERE t.x = 1 OR t.y = 2 ORDER BY t.a DESC LIMIT 3",
            "SELECT DISTINCT t.b, COUNT(*) FROM t JOIN s ON t.id = s.id WHERE t.x = 1 AND s.z > 2 GROUP BY t.b HAVING COUNT(*) > 2 ORDER BY t.b ASC",
        );
        check(
            "SELECT t.a FROM t GROUP BY t.a HAVING COUNT(*) > 1 OR SUM(t.b) > 2",
            "SELECT t.a FROM t",
        );
        check("SELECT t.a, t.a, t.b FROM t", "SELECT t.b, t.a FROM t");
        check("SELECT x FROM (SELECT t.a FROM t)", "SELECT t.a FROM t");
        check(
            "SELECT t.a FROM t",
            "SELECT COUNT(*) FROM (SELECT t.a FROM t GROUP BY t.a)",
        );
    }

    #[test]
    fn set_operations_pick_the_shorter_side() {
        let e = check(
            "SELECT t.a FROM t",
            "SELECT s.a FROM s INTERSECT SELECT t.a FROM t",
        );
        assert_eq!(e.len(), 1);
        assert!(matches!(
            e[0],
            UnitEdit::Iue {
                side: Side::Left,
                ..
            }
        ));
        let e = check(
            "SELECT s.a FROM s UNION SELECT t.a FROM t",
            "SELECT t.a FROM t",
        );
        assert_eq!(e.len(), 1);
        check(
            "SELECT s.a FROM s UNION SELECT t.a FROM t",
            "SELECT s.b FROM s EXCEPT SELECT t.a FROM t",
        );
        check(
            "SELECT s.a FROM s UNION SELECT t.a FROM t",
            "SELECT s.a FROM s WHERE s.b = 1",
        );
    }

    #[test]
    fn rule_subset_limits_extraction() {
        let cfg = ExtractionConfig::new(4, [RuleTag::SelectItem].into_iter().collect()).unwrap();
        assert!(extract_chain(&p("SELECT t.a FROM t"), &p("SELECT t.b FROM t"), &cfg).is_ok());
        let err = extract_chain(
            &p("SELECT t.a FROM t"),
            &p("SELECT t.a FROM t LIMIT 1"),
            &cfg,
        )
        .unwrap_err();
        assert_eq!(err.missing, vec![RuleTag::Limit]);
    }

    #[test]
    fn source_selection_prefers_fewest_tokens_then_latest() {
        let h = vec![
            p("SELECT t.a FROM t"),
            p("SELECT t.a, t.b, t.c FROM t WHERE t.x = 1"),
        ];
        let cur = p("SELECT t.a FROM t LIMIT 3");
        let c = select_source(&h, &cur, &ExtractionConfig::sparc());
        assert_eq!(c.source_turn, Some(1));
        let h = vec![p("SELECT t.a FROM t"), p("SELECT t.a FROM t")];
        assert_eq!(
            select_source(&h, &cur, &ExtractionConfig::sparc()).source_turn,
            Some(2)
        );
        assert!(select_source(&[], &cur, &ExtractionConfig::sparc()).direct);
    }

    #[test]
    fn order_edit_token_count() {
        let c = EditChain::edited(Some(1), vec![UnitEdit::Order(OrderDirection::Asc)]);
        assert_eq!(
            chain_tokens(&c, TokenCounter::Whitespace),
            "change order to ASC".split(' ').count()
        );
    }

    #[test]
    fn coverage_counts_identical_pair() {
        let q = p("SELECT t.a FROM t");
        let s = coverage_stats(
            &[vec![Some(q.clone()), Some(q)], vec![None]],
            &ExtractionConfig::sparc(),
        );
        assert_eq!(s.total_pairs, 1);
        assert_eq!(s.editable_pairs, 1);
        assert_eq!(s.coverage_ratio, 1.0);
        assert_eq!(s.unparseable, 1);
    }
}
