//! Cardinality estimates that order execution.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, SourceKind, TableStats};
use crate::chain::{is_reserved_attribute, Condition, GetNode, JoinEdge, SEARCH_KEY, TABLE_SELECTOR};
use crate::value::CmpOp;

use super::ExecError;

/// Estimated result size. `Finite(_) < Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Cardinality {
    Finite(u64),
    Infinite,
}

impl Cardinality {
    pub fn is_finite(self) -> bool {
        matches!(self, Cardinality::Finite(_))
    }

    fn from_estimate(x: f64) -> Self {
        if x.is_finite() {
            Cardinality::Finite(x.max(0.0).round() as u64)
        } else {
            Cardinality::Infinite
        }
    }

    fn times(self, other: Cardinality) -> Cardinality {
        match (self, other) {
            (Cardinality::Finite(a), Cardinality::Finite(b)) => Cardinality::Finite(a.saturating_mul(b)),
            _ => Cardinality::Infinite,
        }
    }
}

impl fmt::Display for Cardinality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cardinality::Finite(n) => write!(f, "{n}"),
            Cardinality::Infinite => f.write_str("inf"),
        }
    }
}

/// Plan-time view of a GET.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub node: GetNode,
    pub est: Cardinality,
    /// Alias of the executed node this one is best joined with.
    pub join_hint: Option<String>,
}

impl PlanNode {
    pub fn new(node: GetNode, catalog: &Catalog) -> Result<Self, ExecError> {
        let est = estimate_cardinality(&node, catalog)?;
        Ok(PlanNode {
            node,
            est,
            join_hint: None,
        })
    }
}

/// The table named by the top-level `table = "..."` conjunct, if exactly one exists.
pub(crate) fn selected_table(condition: Option<&Condition>) -> Option<String> {
    let cond = condition?;
    let mut tables = cond.conjuncts().into_iter().filter_map(|c| match c {
        Condition::Cmp {
            attr,
            op: CmpOp::Eq,
            value,
        } if attr == TABLE_SELECTOR => Some(value.to_plain_string()),
        _ => None,
    });
    let first = tables.next()?;
    if tables.next().is_some() {
        None
    } else {
        Some(first)
    }
}

/// Estimate for a GET before execution.
///
/// Relational: rows of the selected table times predicate selectivity. Knowledge-graph and
/// document sources: one row per bound `search_key`, otherwise infinite. SELF: one.
pub fn estimate_cardinality(node: &GetNode, catalog: &Catalog) -> Result<Cardinality, ExecError> {
    let desc = catalog.source(&node.source)?;
    Ok(match desc.kind {
        SourceKind::SelfKnowledge => Cardinality::Finite(1),
        SourceKind::KnowledgeGraph | SourceKind::Documents => match node.condition.as_ref().and_then(|c| c.search_keys()) {
            Some(keys) => Cardinality::Finite(keys.len() as u64),
            None => Cardinality::Infinite,
        },
        SourceKind::Relational => {
            let Some(table) = selected_table(node.condition.as_ref()).and_then(|t| desc.table(&t)) else {
                return Ok(Cardinality::Infinite);
            };
            let sel = match &node.condition {
                Some(c) => selectivity(c, table, true),
                None => 1.0,
            };
            Cardinality::from_estimate(table.row_count as f64 * sel)
        }
    })
}

/// Fraction of rows expected to satisfy `cond` under uniformity and independence.
pub fn selectivity(cond: &Condition, table: &TableStats, top_level: bool) -> f64 {
    match cond {
        Condition::And(items) => items.iter().map(|c| selectivity(c, table, top_level)).product(),
        Condition::Or(items) => items.iter().map(|c| selectivity(c, table, false)).sum::<f64>().min(1.0),
        Condition::Not(inner) => 1.0 - selectivity(inner, table, false),
        Condition::Cmp { attr, op, value } => {
            if top_level && attr == TABLE_SELECTOR && *op == CmpOp::Eq {
                return 1.0;
            }
            let Some(stats) = table.column(attr) else {
                return 1.0;
            };
            match op {
                CmpOp::Like | CmpOp::Fuzzy => 0.1,
                _ if value.is_null() => 1.0,
                CmpOp::Eq => stats.distinct_count.map_or(1.0, |d| 1.0 / d.max(1) as f64),
                CmpOp::Ne => stats.distinct_count.map_or(1.0, |d| 1.0 - 1.0 / d.max(1) as f64),
                CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                    match (stats.min, stats.max, value.as_number()) {
                        (Some(lo), Some(hi), Some(v)) => {
                            if hi <= lo {
                                let holds = match op {
                                    CmpOp::Lt => lo < v,
                                    CmpOp::Le => lo <= v,
                                    CmpOp::Gt => lo > v,
                                    _ => lo >= v,
                                };
                                if holds {
                                    1.0
                                } else {
                                    0.0
                                }
                            } else {
                                let below = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
                                if matches!(op, CmpOp::Lt | CmpOp::Le) {
                                    below
                                } else {
                                    1.0 - below
                                }
                            }
                        }
                        _ => 1.0,
                    }
                }
            }
        }
    }
}

/// Statistics for one side of a join estimate.
pub(crate) struct JoinSide<'a> {
    pub card: Cardinality,
    pub table_rows: Option<u64>,
    pub distinct: Box<dyn Fn(&str) -> Option<u64> + 'a>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum EdgeShape {
    Relational(CmpOp),
    Semantic,
}

/// Join estimate between an executed (`bound`) side and a neighbor.
///
/// `forward` is true when the bound side holds the edge's left attribute.
pub(crate) fn join_estimate(
    bound: &JoinSide<'_>,
    neighbor: &JoinSide<'_>,
    bound_attr: &str,
    neighbor_attr: &str,
    shape: EdgeShape,
    forward: bool,
) -> Cardinality {
    let binds_key = neighbor_attr == SEARCH_KEY
        && match shape {
            EdgeShape::Relational(op) => op == CmpOp::Eq,
            EdgeShape::Semantic => forward,
        };
    if binds_key {
        return bound.card;
    }
    if let EdgeShape::Relational(CmpOp::Eq) = shape {
        if let (Some(dl), Some(dr)) = ((bound.distinct)(bound_attr), (neighbor.distinct)(neighbor_attr)) {
            let rows = match neighbor.card {
                Cardinality::Finite(n) => Some(n),
                Cardinality::Infinite => neighbor.table_rows,
            };
            if let (Some(rows), Cardinality::Finite(b)) = (rows, bound.card) {
                let denom = dl.max(dr).max(1) as f64;
                return Cardinality::from_estimate(b as f64 * rows as f64 / denom);
            }
        }
    }
    if matches!(shape, EdgeShape::Semantic) && forward {
        return bound.card;
    }
    bound.card.times(neighbor.card)
}

fn plan_side<'a>(plan: &'a PlanNode, catalog: &'a Catalog) -> JoinSide<'a> {
    let table = catalog
        .source(&plan.node.source)
        .ok()
        .filter(|d| d.kind == SourceKind::Relational)
        .and_then(|d| selected_table(plan.node.condition.as_ref()).and_then(|t| d.table(&t)));
    JoinSide {
        card: plan.est,
        table_rows: table.map(|t| t.row_count),
        distinct: Box::new(move |attr| table.and_then(|t| t.column(attr)).and_then(|c| c.distinct_count)),
    }
}

/// Estimated size of joining `neighbor` onto the result of `bound`, with `bound` on the left of `edge`.
pub fn estimate_join(
    bound: &PlanNode,
    neighbor: &PlanNode,
    edge: &JoinEdge,
    catalog: &Catalog,
) -> Result<Cardinality, ExecError> {
    let present = |n: &GetNode, attr: &str| n.has_attribute(attr) || is_reserved_attribute(attr);
    if !present(&bound.node, edge.left_attr()) || !present(&neighbor.node, edge.right_attr()) {
        return Err(ExecError::EdgeMismatch(format!(
            "edge {} -> {} does not link {} and {}",
            edge.left_attr(),
            edge.right_attr(),
            bound.node.alias,
            neighbor.node.alias
        )));
    }
    let shape = match edge {
        JoinEdge::Relational { op, .. } => EdgeShape::Relational(*op),
        JoinEdge::SemanticTriple { .. } => EdgeShape::Semantic,
    };
    Ok(join_estimate(
        &plan_side(bound, catalog),
        &plan_side(neighbor, catalog),
        edge.left_attr(),
        edge.right_attr(),
        shape,
        true,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnStats, SourceDescriptor};
    use crate::chain::parse_condition;

    fn catalog() -> Catalog {
        let mut cat = Catalog::new();
        cat.register_source(SourceDescriptor::new("WIKI", SourceKind::KnowledgeGraph, "wiki"))
            .unwrap();
        cat.register_source(SourceDescriptor::new("WEB", SourceKind::Documents, "web"))
            .unwrap();
        cat.register_source(SourceDescriptor::new("SELF", SourceKind::SelfKnowledge, "")).unwrap();
        let col = |name: &str, d: u64, lo: Option<f64>, hi: Option<f64>| ColumnStats {
            column: name.into(),
            min: lo,
            max: hi,
            distinct_count: Some(d),
        };
        cat.register_source(
            SourceDescriptor::new("DB", SourceKind::Relational, "db").with_tables(vec![
                TableStats {
                    table: "t".into(),
                    row_count: 100,
                    columns: vec![col("a", 20, None, None), col("year", 30, Some(1990.0), Some(2020.0))],
                },
                TableStats {
                    table: "left".into(),
                    row_count: 3,
                    columns: vec![col("k", 3, None, None)],
                },
                TableStats {
                    table: "right".into(),
                    row_count: 50,
                    columns: vec![col("k", 5, None, None)],
                },
            ]),
        )
        .unwrap();
        // left table with 10 distinct keys for the join example
        cat.register_source(SourceDescriptor::new("DB2", SourceKind::Relational, "").with_tables(vec![TableStats {
            table: "l".into(),
            row_count: 30,
            columns: vec![col("k", 10, None, None)],
        }]))
        .unwrap();
        cat
    }

    fn node(source: &str, cond: &str, attrs: &[&str]) -> GetNode {
        let c = if cond.is_empty() { None } else { Some(parse_condition(cond).unwrap()) };
        GetNode::new("g", source, c, attrs.iter().copied())
    }

    #[test]
    fn total_order() {
        use Cardinality::*;
        assert!(Finite(0) < Finite(1));
        assert!(Finite(u64::MAX) < Infinite);
        assert_eq!(Infinite.cmp(&Infinite), std::cmp::Ordering::Equal);
    }

    #[test]
    fn search_key_rules() {
        let cat = catalog();
        let kg = node("WIKI", r#"search_key = "DeepMind""#, &["content"]);
        assert_eq!(estimate_cardinality(&kg, &cat).unwrap(), Cardinality::Finite(1));
        let kg = node("WIKI", r#"founded > 2000"#, &["content"]);
        assert_eq!(estimate_cardinality(&kg, &cat).unwrap(), Cardinality::Infinite);
        let docs = node("WEB", "", &["chunk"]);
        assert_eq!(estimate_cardinality(&docs, &cat).unwrap(), Cardinality::Infinite);
        let me = node("SELF", "", &["x"]);
        assert_eq!(estimate_cardinality(&me, &cat).unwrap(), Cardinality::Finite(1));
        let unknown = node("NOPE", "", &["x"]);
        assert!(matches!(estimate_cardinality(&unknown, &cat), Err(ExecError::Catalog(_))));
    }

    #[test]
    fn relational_equality_uses_distinct_count() {
        let cat = catalog();
        let n = node("DB", r#"table = "t" AND a = "x""#, &["a"]);
        assert_eq!(estimate_cardinality(&n, &cat).unwrap(), Cardinality::Finite(5));
    }

    #[test]
    fn relational_range_or_not_like() {
        let cat = catalog();
        let est = |c: &str| estimate_cardinality(&node("DB", c, &["a"]), &cat).unwrap();
        // (2020-2000)/(2020-1990) of 100 rows
        assert_eq!(est(r#"table = "t" AND year > 2000"#), Cardinality::Finite(67));
        assert_eq!(est(r#"table = "t" AND year < 1980"#), Cardinality::Finite(0));
        assert_eq!(est(r#"table = "t" AND a LIKE "x%""#), Cardinality::Finite(10));
        assert_eq!(est(r#"table = "t" AND (a = "x" OR a = "y")"#), Cardinality::Finite(10));
        assert_eq!(est(r#"table = "t" AND NOT a = "x""#), Cardinality::Finite(95));
        assert_eq!(est(r#"table = "t" AND missing = 3"#), Cardinality::Finite(100));
        assert_eq!(est(r#"a = "x""#), Cardinality::Infinite);
    }

    #[test]
    fn join_estimates() {
        let cat = catalog();
        let plan = |n: GetNode| PlanNode::new(n, &cat).unwrap();
        let kg_bound = plan(node("WIKI", r#"search_key = "DeepMind""#, &["content"]));
        let kg_next = plan(node("WIKI", "", &["search_key"]));
        let e = JoinEdge::semantic("content", "parent_company", "search_key");
        assert_eq!(estimate_join(&kg_bound, &kg_next, &e, &cat).unwrap(), Cardinality::Finite(1));

        // bound Finite(3) with 10 distinct keys, neighbor 50 rows with 5 distinct keys: 3*50/10
        let mut bound = plan(node("DB2", r#"table = "l""#, &["k"]));
        bound.est = Cardinality::Finite(3);
        let neighbor = plan(node("DB", r#"table = "right""#, &["k"]));
        assert_eq!(neighbor.est, Cardinality::Finite(50));
        let e = JoinEdge::relational("k", CmpOp::Eq, "k");
        assert_eq!(estimate_join(&bound, &neighbor, &e, &cat).unwrap(), Cardinality::Finite(15));

        let mut b2 = plan(node("DB2", r#"table = "l""#, &["k"]));
        b2.est = Cardinality::Finite(2);
        let docs = plan(node("WEB", "", &["chunk", "title"]));
        let e = JoinEdge::relational("k", CmpOp::Eq, "title");
        assert_eq!(estimate_join(&b2, &docs, &e, &cat).unwrap(), Cardinality::Infinite);

        let e = JoinEdge::relational("zzz", CmpOp::Eq, "title");
        assert!(matches!(estimate_join(&b2, &docs, &e, &cat), Err(ExecError::EdgeMismatch(_))));
    }
}
