//! Cardinality-driven greedy execution of GET nodes linked by JOIN edges.
//!
//! Every node enters a priority queue keyed by its estimated [`Cardinality`]. The loop pops the
//! smallest key; a pending node runs its GET, merged with its recorded join partner when one
//! exists (the partner's values are pushed into the GET as an `OR` filter first). The merged
//! result is reinserted with its real row count, and every neighbor whose joined estimate
//! improves gets the smaller key and a hint naming the merged node. The loop ends when one node
//! is left.
//!
//! JOIN results are always the edge-filtered Cartesian product of both sides; the pushed-down
//! filters only shrink what the second GET has to fetch.

mod cardinality;
mod expand;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, SourceKind};
use crate::chain::{is_reserved_attribute, ApiChain, Condition, GetNode, JoinEdge};
use crate::gateway::{Gateway, GatewayError};
use crate::sources::{GetContext, SourceAdapter, SourceError};
use crate::value::{compare, CmpOp, Record, Value};

pub use cardinality::{estimate_cardinality, estimate_join, selectivity, Cardinality, PlanNode};
pub use expand::{expand_join_condition, JoinExpansion};
pub use trace::{TraceStep, TraceUpdate};

use cardinality::{join_estimate, selected_table, EdgeShape, JoinSide};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("no adapter for source {0}")]
    NoAdapter(String),
    #[error("no anchored node left; remaining nodes {0:?} all have infinite cardinality")]
    UnanchoredPlan(Vec<String>),
    #[error("GET {alias} failed: {source}")]
    Adapter { alias: String, source: SourceError },
    #[error("GET {alias} returned {rows} rows, limit is {max}")]
    ResultTooLarge { alias: String, rows: usize, max: usize },
    #[error("join into {alias} would expand to {distinct} values, limit is {max}")]
    JoinFanoutExceeded { alias: String, distinct: usize, max: usize },
    #[error("join attribute {0} missing from the bound result")]
    MissingJoinAttribute(String),
    #[error("relation {0} could not be extracted from any bound record")]
    ExtractionFailed(String),
    #[error("edge mismatch: {0}")]
    EdgeMismatch(String),
    #[error("plan conflict: {0}")]
    PlanConflict(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Records flowing between operators; keys are namespaced `alias.attr`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EntitySet {
    pub records: Vec<Record>,
    pub provenance: BTreeSet<String>,
}

impl EntitySet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records sorted, for order-insensitive comparison.
    pub fn sorted_records(&self) -> Vec<Record> {
        let mut r = self.records.clone();
        r.sort();
        r
    }
}

pub fn namespaced(alias: &str, attr: &str) -> String {
    format!("{alias}.{attr}")
}

/// Join edge between two node indices of a [`QueryGraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEdge {
    pub left: usize,
    pub right: usize,
    pub join: JoinEdge,
}

/// General GET/JOIN graph; a chain is the special case `edges[i] = (i, i + 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryGraph {
    pub nodes: Vec<GetNode>,
    pub edges: Vec<GraphEdge>,
}

impl From<&ApiChain> for QueryGraph {
    fn from(chain: &ApiChain) -> Self {
        QueryGraph {
            nodes: chain.nodes.clone(),
            edges: chain
                .edges
                .iter()
                .enumerate()
                .map(|(i, e)| GraphEdge {
                    left: i,
                    right: i + 1,
                    join: e.clone(),
                })
                .collect(),
        }
    }
}

impl QueryGraph {
    /// Check indices, aliases, attributes and connectivity; add reserved join attributes as internal.
    pub fn validate(&mut self) -> Result<(), ExecError> {
        if self.nodes.is_empty() {
            return Err(ExecError::Graph("no nodes".into()));
        }
        let mut aliases = BTreeSet::new();
        for n in &self.nodes {
            if !aliases.insert(n.alias.clone()) {
                return Err(ExecError::Graph(format!("duplicate alias {}", n.alias)));
            }
        }
        for e in &self.edges {
            if e.left >= self.nodes.len() || e.right >= self.nodes.len() || e.left == e.right {
                return Err(ExecError::Graph(format!("bad edge {} -> {}", e.left, e.right)));
            }
            for (idx, attr) in [(e.left, e.join.left_attr()), (e.right, e.join.right_attr())] {
                let node = &mut self.nodes[idx];
                if node.has_attribute(attr) {
                    continue;
                }
                if is_reserved_attribute(attr) {
                    node.internal.insert(attr.to_string());
                } else {
                    return Err(ExecError::EdgeMismatch(format!("{} has no attribute {attr}", node.alias)));
                }
            }
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                continue;
            }
            for e in &self.edges {
                if e.left == i && !seen[e.right] {
                    stack.push(e.right);
                }
                if e.right == i && !seen[e.left] {
                    stack.push(e.left);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(ExecError::Graph("graph is not connected".into()));
        }
        Ok(())
    }
}

/// Adapters by source name.
#[derive(Clone, Default)]
pub struct Adapters {
    map: HashMap<String, Arc<dyn SourceAdapter>>,
}

impl Adapters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, source: impl Into<String>, adapter: Arc<dyn SourceAdapter>) {
        self.map.insert(source.into(), adapter);
    }

    pub fn get(&self, source: &str) -> Option<&Arc<dyn SourceAdapter>> {
        self.map.get(source)
    }
}

#[derive(Debug, Clone)]
pub struct ExecConfig {
    /// Largest result a single GET may return.
    pub max_rows: usize,
    /// Largest number of distinct values pushed into one GET by a join.
    pub max_fanout: usize,
    /// Natural-language question, passed to model calls as context.
    pub query: String,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            max_rows: 10_000,
            max_fanout: 200,
            query: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub result: EntitySet,
    pub trace: Vec<TraceStep>,
}

pub struct Executor<'a> {
    catalog: &'a Catalog,
    adapters: &'a Adapters,
    gateway: &'a dyn Gateway,
    config: ExecConfig,
}

enum State {
    Pending,
    Done(Vec<Record>),
}

struct Group {
    label: String,
    members: BTreeSet<usize>,
    state: State,
    hint: Option<usize>,
    key: Cardinality,
    live: bool,
}

/// An edge seen from one group towards another.
#[derive(Clone, Copy)]
struct Oriented {
    edge: usize,
    /// The "from" group holds the edge's left node.
    forward: bool,
}

type Queue = BTreeSet<(Cardinality, String, usize)>;

impl<'a> Executor<'a> {
    pub fn new(catalog: &'a Catalog, adapters: &'a Adapters, gateway: &'a dyn Gateway) -> Self {
        Executor {
            catalog,
            adapters,
            gateway,
            config: ExecConfig::default(),
        }
    }

    pub fn with_config(mut self, config: ExecConfig) -> Self {
        self.config = config;
        self
    }

    pub fn execute_chain(&self, chain: &ApiChain) -> Result<Execution, ExecError> {
        self.execute(&QueryGraph::from(chain))
    }

    pub fn execute(&self, graph: &QueryGraph) -> Result<Execution, ExecError> {
        let mut graph = graph.clone();
        graph.validate()?;
        Run {
            exec: self,
            graph: &graph,
            groups: Vec::new(),
            queue: Queue::new(),
            trace: Vec::new(),
            base: Vec::new(),
            extractions: HashMap::new(),
        }
        .go()
    }
}

struct Run<'e, 'a> {
    exec: &'e Executor<'a>,
    graph: &'e QueryGraph,
    groups: Vec<Group>,
    queue: Queue,
    trace: Vec<TraceStep>,
    /// Own estimate of each node.
    base: Vec<Cardinality>,
    /// (text, relation) -> extracted entity
    extractions: expand::ExtractionCache,
}

impl Run<'_, '_> {
    fn go(mut self) -> Result<Execution, ExecError> {
        for (i, node) in self.graph.nodes.iter().enumerate() {
            let est = estimate_cardinality(node, self.exec.catalog)?;
            self.base.push(est);
            self.groups.push(Group {
                label: node.alias.clone(),
                members: BTreeSet::from([i]),
                state: State::Pending,
                hint: None,
                key: est,
                live: true,
            });
            self.queue.insert((est, node.alias.clone(), i));
        }

        while self.queue.len() > 1 {
            let (key, label, id) = self.queue.pop_first().expect("queue has entries");
            let mut step = TraceStep::new(label, key, self.queue.iter().map(|(k, l, _)| (l.clone(), *k)).collect());

            let partner = match self.groups[id].hint {
                Some(p) if self.groups[p].live => Some(p),
                Some(p) => {
                    return Err(ExecError::PlanConflict(format!(
                        "{} is hinted to join {}, which was already merged",
                        self.groups[id].label, self.groups[p].label
                    )))
                }
                None => match self.groups[id].state {
                    State::Pending => None,
                    State::Done(_) => Some(self.cheapest_neighbor(id)?),
                },
            };

            let new_id = match partner {
                None => {
                    if !key.is_finite() {
                        let mut remaining: Vec<String> = vec![self.groups[id].label.clone()];
                        remaining.extend(self.queue.iter().map(|(_, l, _)| l.clone()));
                        return Err(ExecError::UnanchoredPlan(remaining));
                    }
                    let node = *self.groups[id].members.first().unwrap();
                    let records = self.run_get(node, Vec::new())?;
                    self.groups[id].state = State::Done(records);
                    id
                }
                Some(p) => {
                    self.queue.remove(&(self.groups[p].key, self.groups[p].label.clone(), p));
                    step.partner = Some(self.groups[p].label.clone());
                    self.merge(id, p)?
                }
            };

            let rows = match &self.groups[new_id].state {
                State::Done(r) => r.len(),
                State::Pending => unreachable!("merged groups are executed"),
            };
            step.rows = rows;
            let new_key = Cardinality::Finite(rows as u64);
            self.groups[new_id].key = new_key;
            self.groups[new_id].hint = None;
            self.queue.insert((new_key, self.groups[new_id].label.clone(), new_id));

            for n in self.live_neighbors(new_id) {
                let c_new = self.estimate_groups(new_id, n);
                let current = self.groups[n].key;
                if c_new < current {
                    let label = self.groups[n].label.clone();
                    self.queue.remove(&(current, label.clone(), n));
                    self.queue.insert((c_new, label.clone(), n));
                    self.groups[n].key = c_new;
                    self.groups[n].hint = Some(new_id);
                    step.updates.push(TraceUpdate {
                        neighbor: label,
                        old: current,
                        new: c_new,
                    });
                }
            }
            self.trace.push(step);
        }

        let (key, label, id) = self.queue.pop_first().expect("one node remains");
        if let State::Pending = self.groups[id].state {
            let mut step = TraceStep::new(label, key, Vec::new());
            let node = *self.groups[id].members.first().unwrap();
            let records = self.run_get(node, Vec::new())?;
            step.rows = records.len();
            self.groups[id].state = State::Done(records);
            self.trace.push(step);
        }
        let group = &self.groups[id];
        let State::Done(records) = &group.state else { unreachable!() };
        let hidden: BTreeSet<String> = group
            .members
            .iter()
            .flat_map(|&m| {
                let n = &self.graph.nodes[m];
                n.internal
                    .iter()
                    .filter(|a| !n.attributes.contains(*a))
                    .map(|a| namespaced(&n.alias, a))
                    .collect::<Vec<_>>()
            })
            .collect();
        let records = records
            .iter()
            .map(|r| r.iter().filter(|(k, _)| !hidden.contains(*k)).map(|(k, v)| (k.clone(), v.clone())).collect())
            .collect();
        Ok(Execution {
            result: EntitySet {
                records,
                provenance: group.members.iter().map(|&m| self.graph.nodes[m].alias.clone()).collect(),
            },
            trace: self.trace,
        })
    }

    fn edges_between(&self, from: usize, to: usize) -> Vec<Oriented> {
        let (a, b) = (&self.groups[from].members, &self.groups[to].members);
        self.graph
            .edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                if a.contains(&e.left) && b.contains(&e.right) {
                    Some(Oriented { edge: i, forward: true })
                } else if a.contains(&e.right) && b.contains(&e.left) {
                    Some(Oriented { edge: i, forward: false })
                } else {
                    None
                }
            })
            .collect()
    }

    fn live_neighbors(&self, id: usize) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&g| g != id && self.groups[g].live && !self.edges_between(id, g).is_empty())
            .collect()
    }

    fn cheapest_neighbor(&self, id: usize) -> Result<usize, ExecError> {
        self.live_neighbors(id)
            .into_iter()
            .min_by(|&a, &b| (self.groups[a].key, &self.groups[a].label).cmp(&(self.groups[b].key, &self.groups[b].label)))
            .ok_or_else(|| ExecError::Graph(format!("{} has no neighbor left to join", self.groups[id].label)))
    }

    /// Joined estimate of executed group `bound` with neighbor `n`; minimum over connecting edges.
    fn estimate_groups(&self, bound: usize, n: usize) -> Cardinality {
        let State::Done(bound_rows) = &self.groups[bound].state else {
            return Cardinality::Infinite;
        };
        let mut best = Cardinality::Infinite;
        for o in self.edges_between(bound, n) {
            let e = &self.graph.edges[o.edge];
            let (bound_node, n_node) = if o.forward { (e.left, e.right) } else { (e.right, e.left) };
            let (bound_attr, n_attr) = if o.forward {
                (e.join.left_attr(), e.join.right_attr())
            } else {
                (e.join.right_attr(), e.join.left_attr())
            };
            let bound_key = namespaced(&self.graph.nodes[bound_node].alias, bound_attr);
            let bound_side = JoinSide {
                card: Cardinality::Finite(bound_rows.len() as u64),
                table_rows: None,
                distinct: Box::new(|_| distinct_count(bound_rows, &bound_key)),
            };
            let n_key = namespaced(&self.graph.nodes[n_node].alias, n_attr);
            let n_side = match &self.groups[n].state {
                State::Done(rows) => JoinSide {
                    card: Cardinality::Finite(rows.len() as u64),
                    table_rows: None,
                    distinct: Box::new(move |_| distinct_count(rows, &n_key)),
                },
                State::Pending => {
                    let node = &self.graph.nodes[n_node];
                    let table = self
                        .exec
                        .catalog
                        .source(&node.source)
                        .ok()
                        .filter(|d| d.kind == SourceKind::Relational)
                        .and_then(|d| selected_table(node.condition.as_ref()).and_then(|t| d.table(&t)));
                    JoinSide {
                        card: self.base[n_node],
                        table_rows: table.map(|t| t.row_count),
                        distinct: Box::new(move |a| table.and_then(|t| t.column(a)).and_then(|c| c.distinct_count)),
                    }
                }
            };
            let shape = match &e.join {
                JoinEdge::Relational { op, .. } => EdgeShape::Relational(*op),
                JoinEdge::SemanticTriple { .. } => EdgeShape::Semantic,
            };
            best = best.min(join_estimate(&bound_side, &n_side, bound_attr, n_attr, shape, o.forward));
        }
        best
    }

    /// Merge popped group `id` with `partner`; returns the id of the new group.
    fn merge(&mut self, id: usize, partner: usize) -> Result<usize, ExecError> {
        // orient so that `done` is executed; `other` may be pending
        let (done, other) = match (&self.groups[id].state, &self.groups[partner].state) {
            (_, State::Done(_)) => (partner, id),
            (State::Done(_), State::Pending) => (id, partner),
            (State::Pending, State::Pending) => {
                return Err(ExecError::PlanConflict(format!(
                    "{} and {} are both unexecuted",
                    self.groups[id].label, self.groups[partner].label
                )))
            }
        };
        let edges = self.edges_between(done, other);
        let done_rows = match &self.groups[done].state {
            State::Done(r) => r.clone(),
            State::Pending => unreachable!(),
        };

        let other_rows = match &self.groups[other].state {
            State::Done(r) => r.clone(),
            State::Pending => {
                let node = *self.groups[other].members.first().unwrap();
                if done_rows.is_empty() {
                    Vec::new()
                } else {
                    let extra = self.pushdown(&done_rows, &edges, node)?;
                    match extra {
                        // a bound side with no usable join values matches nothing
                        Some(extra) => self.run_get(node, extra)?,
                        None => Vec::new(),
                    }
                }
            }
        };

        let joined = self.join_records(&done_rows, &other_rows, &edges)?;
        let mut members = self.groups[done].members.clone();
        members.extend(self.groups[other].members.iter().copied());
        let mut names: Vec<&str> = members.iter().map(|&m| self.graph.nodes[m].alias.as_str()).collect();
        names.sort_unstable();
        let label = names.join("+");
        self.groups[done].live = false;
        self.groups[other].live = false;
        let new_id = self.groups.len();
        self.groups.push(Group {
            label,
            members,
            state: State::Done(joined),
            hint: None,
            key: Cardinality::Infinite,
            live: true,
        });
        for g in self.groups.iter_mut().filter(|g| g.live) {
            if g.hint == Some(done) || g.hint == Some(other) {
                g.hint = Some(new_id);
            }
        }
        Ok(new_id)
    }

    /// Filters pushed into the pending node from the executed side; `None` when nothing can match.
    fn pushdown(&mut self, bound: &[Record], edges: &[Oriented], node: usize) -> Result<Option<Vec<Condition>>, ExecError> {
        let mut extra = Vec::new();
        let alias = self.graph.nodes[node].alias.clone();
        for o in edges {
            let e = self.graph.edges[o.edge].clone();
            let set = EntitySet {
                records: bound.to_vec(),
                provenance: BTreeSet::new(),
            };
            if o.forward {
                let key = namespaced(&self.graph.nodes[e.left].alias, e.join.left_attr());
                match expand::expand_with_cache(
                    &set,
                    &key,
                    &e.join,
                    &alias,
                    self.exec.gateway,
                    &self.exec.config.query,
                    self.exec.config.max_fanout,
                    &mut self.extractions,
                )? {
                    JoinExpansion::Filter(c) => extra.push(c),
                    JoinExpansion::Empty => return Ok(None),
                    JoinExpansion::Unfiltered => {}
                }
            } else if let JoinEdge::Relational { left_attr, op, right_attr } = &e.join {
                // executed side holds the right node: e1.left op v for each bound v
                let key = namespaced(&self.graph.nodes[e.right].alias, right_attr);
                let values = expand::distinct_values(&set, &key)?;
                if values.is_empty() {
                    return Ok(None);
                }
                if values.len() > self.exec.config.max_fanout {
                    return Err(ExecError::JoinFanoutExceeded {
                        alias,
                        distinct: values.len(),
                        max: self.exec.config.max_fanout,
                    });
                }
                if matches!(op, CmpOp::Like | CmpOp::Fuzzy) {
                    continue;
                }
                extra.push(Condition::or(
                    values.into_iter().map(|v| Condition::cmp(left_attr.clone(), *op, v)).collect(),
                ));
            }
        }
        Ok(Some(extra))
    }

    fn run_get(&self, node_idx: usize, extra: Vec<Condition>) -> Result<Vec<Record>, ExecError> {
        let node = &self.graph.nodes[node_idx];
        let adapter = self
            .exec
            .adapters
            .get(&node.source)
            .ok_or_else(|| ExecError::NoAdapter(node.source.clone()))?;
        let mut effective = node.clone();
        effective.condition = Condition::conjoin(node.condition.as_ref(), extra);
        let ctx = GetContext {
            gateway: self.exec.gateway,
            query: &self.exec.config.query,
        };
        let rows = adapter.get(&effective, &ctx).map_err(|source| ExecError::Adapter {
            alias: node.alias.clone(),
            source,
        })?;
        if rows.len() > self.exec.config.max_rows {
            return Err(ExecError::ResultTooLarge {
                alias: node.alias.clone(),
                rows: rows.len(),
                max: self.exec.config.max_rows,
            });
        }
        let attrs = node.all_attributes();
        Ok(rows
            .into_iter()
            .map(|mut r| {
                attrs
                    .iter()
                    .map(|a| (namespaced(&node.alias, a), r.remove(a).unwrap_or(Value::Null)))
                    .collect()
            })
            .collect())
    }

    fn extract(&mut self, text: &str, relation: &str) -> Result<Option<String>, ExecError> {
        expand::cached_extract(
            self.exec.gateway,
            &self.exec.config.query,
            text,
            relation,
            &mut self.extractions,
        )
    }

    /// Filter `a × b` by every edge; `edges` are oriented from `a`'s group.
    fn join_records(&mut self, a: &[Record], b: &[Record], edges: &[Oriented]) -> Result<Vec<Record>, ExecError> {
        // semantic edges: the extracted relation for each record on the left side
        let mut extracted: BTreeMap<usize, Vec<Option<String>>> = BTreeMap::new();
        for o in edges {
            let e = self.graph.edges[o.edge].clone();
            if let JoinEdge::SemanticTriple { left_attr, relation, .. } = &e.join {
                let key = namespaced(&self.graph.nodes[e.left].alias, left_attr);
                let side = if o.forward { a } else { b };
                let mut vals = Vec::with_capacity(side.len());
                for r in side {
                    let text = r.get(&key).map(Value::to_plain_string).unwrap_or_default();
                    vals.push(if text.is_empty() { None } else { self.extract(&text, relation)? });
                }
                extracted.insert(o.edge, vals);
            }
        }
        let mut out = Vec::new();
        for (i, ra) in a.iter().enumerate() {
            for (j, rb) in b.iter().enumerate() {
                let keep = edges.iter().all(|o| {
                    let e = &self.graph.edges[o.edge];
                    let (lrec, rrec, li) = if o.forward { (ra, rb, i) } else { (rb, ra, j) };
                    let right_key = namespaced(&self.graph.nodes[e.right].alias, e.join.right_attr());
                    let right_val = rrec.get(&right_key).cloned().unwrap_or(Value::Null);
                    match &e.join {
                        JoinEdge::Relational { left_attr, op, .. } => {
                            let left_key = namespaced(&self.graph.nodes[e.left].alias, left_attr);
                            let left_val = lrec.get(&left_key).cloned().unwrap_or(Value::Null);
                            // join predicates never match a null; `= null` is only a literal form
                            !left_val.is_null()
                                && !right_val.is_null()
                                && compare(&left_val, *op, &right_val) == Some(true)
                        }
                        JoinEdge::SemanticTriple { .. } => match &extracted[&o.edge][li] {
                            Some(x) => compare(&right_val, CmpOp::Eq, &Value::Text(x.clone())) == Some(true),
                            None => false,
                        },
                    }
                });
                if keep {
                    let mut merged = ra.clone();
                    merged.extend(rb.iter().map(|(k, v)| (k.clone(), v.clone())));
                    out.push(merged);
                }
            }
        }
        Ok(out)
    }
}

fn distinct_count(rows: &[Record], key: &str) -> Option<u64> {
    let set: BTreeSet<&Value> = rows.iter().filter_map(|r| r.get(key)).filter(|v| !v.is_null()).collect();
    Some(set.len() as u64)
}
