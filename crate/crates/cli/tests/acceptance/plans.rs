//! Random GET/JOIN graphs over in-memory tables, checked against the filtered Cartesian product.

use std::collections::BTreeMap;
use std::sync::Arc;

use errag_core::executor::{Adapters, Execution, GraphEdge, QueryGraph};
use errag_core::sources::MemoryAdapter;
use errag_core::{Catalog, CmpOp, Condition, Executor, GetNode, JoinEdge, MockGateway, SourceDescriptor, SourceKind, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::{eval3, filtered_product, Edge, Row};
use crate::{ensure, Outcome};

pub const INSTANCES: u64 = 500;
const SOURCE: &str = "MEM";
const NUMERIC: [&str; 2] = ["a", "b"];
const WORDS: [&str; 5] = ["x", "y", "z", "xy", "Yz"];

pub struct Instance {
    pub graph: QueryGraph,
    tables: Vec<Vec<Row>>,
    edges: Vec<Edge>,
}

fn random_value(rng: &mut ChaCha8Rng, column: &str) -> Value {
    if rng.gen_bool(0.1) {
        return Value::Null;
    }
    if column == "c" {
        Value::text(*WORDS.choose(rng).unwrap())
    } else {
        Value::Number(f64::from(rng.gen_range(0..6)))
    }
}

fn random_op(rng: &mut ChaCha8Rng, text: bool) -> CmpOp {
    let roll = rng.gen_range(0..100);
    match roll {
        0..=44 => CmpOp::Eq,
        45..=54 => CmpOp::Ne,
        55..=64 => CmpOp::Lt,
        65..=74 => CmpOp::Le,
        75..=84 => CmpOp::Gt,
        85..=92 => CmpOp::Ge,
        _ if text && roll % 2 == 0 => CmpOp::Like,
        _ if text => CmpOp::Fuzzy,
        _ => CmpOp::Eq,
    }
}

fn random_cmp(rng: &mut ChaCha8Rng) -> Condition {
    let column = *["a", "b", "c"].choose(rng).unwrap();
    let op = random_op(rng, column == "c");
    let value = match op {
        CmpOp::Like => Value::text(*["x%", "%z", "_", "%"].choose(rng).unwrap()),
        CmpOp::Fuzzy => Value::text(*["y", "X", "yz"].choose(rng).unwrap()),
        _ if rng.gen_bool(0.05) => Value::Null,
        _ => random_value(rng, column),
    };
    let value = if value.is_null() && !matches!(op, CmpOp::Eq | CmpOp::Ne) { random_value(rng, column) } else { value };
    Condition::cmp(column, op, value)
}

fn random_filter(rng: &mut ChaCha8Rng) -> Option<Condition> {
    match rng.gen_range(0..10) {
        0..=3 => None,
        4..=6 => Some(random_cmp(rng)),
        7 => Some(Condition::Not(Box::new(random_cmp(rng)))),
        8 => Some(Condition::Or(vec![random_cmp(rng), random_cmp(rng)])),
        _ => Some(Condition::Or(vec![
            Condition::And(vec![random_cmp(rng), random_cmp(rng)]),
            random_cmp(rng),
        ])),
    }
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = *[1usize, 2, 3, 3, 4, 4, 4].choose(&mut rng).unwrap();
    let aliases: Vec<String> = (0..n).map(|i| format!("g{}", i + 1)).collect();

    let tables: Vec<Vec<Row>> = (0..n)
        .map(|_| {
            let rows = rng.gen_range(0..=20);
            (0..rows)
                .map(|_| ["a", "b", "c"].iter().map(|c| (c.to_string(), random_value(&mut rng, c))).collect())
                .collect()
        })
        .collect();

    // spanning tree plus an occasional extra edge
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    if n > 1 && rng.gen_bool(0.3) {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        pairs.push((a, b));
    }
    let mut attrs: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let mut cols: Vec<String> = ["a", "b", "c"].iter().filter(|_| rng.gen_bool(0.5)).map(|c| c.to_string()).collect();
            if cols.is_empty() {
                cols.push("a".into());
            }
            cols
        })
        .collect();
    let mut edges = Vec::new();
    let mut graph_edges = Vec::new();
    for (x, y) in pairs {
        let (l, r) = if rng.gen_bool(0.5) { (x, y) } else { (y, x) };
        let text = rng.gen_bool(0.25);
        let (la, ra) = if text {
            ("c".to_string(), "c".to_string())
        } else {
            (NUMERIC.choose(&mut rng).unwrap().to_string(), NUMERIC.choose(&mut rng).unwrap().to_string())
        };
        let op = random_op(&mut rng, text);
        for (node, a) in [(l, &la), (r, &ra)] {
            if !attrs[node].contains(a) {
                attrs[node].push(a.clone());
            }
        }
        edges.push((l, la.clone(), op, r, ra.clone()));
        graph_edges.push(GraphEdge {
            left: l,
            right: r,
            join: JoinEdge::relational(la, op, ra),
        });
    }

    let nodes = (0..n)
        .map(|i| {
            let selector = Condition::cmp("table", CmpOp::Eq, Value::text(format!("t{i}")));
            let condition = Condition::conjoin(Some(&selector), random_filter(&mut rng).into_iter().collect());
            GetNode::new(&aliases[i], SOURCE, condition, attrs[i].clone())
        })
        .collect();
    Instance {
        graph: QueryGraph {
            nodes,
            edges: graph_edges,
        },
        tables,
        edges,
    }
}

impl Instance {
    fn columns() -> Vec<String> {
        ["a", "b", "c"].map(String::from).to_vec()
    }

    pub fn execute(&self) -> Result<Execution, String> {
        let mut mem = MemoryAdapter::new();
        for (i, rows) in self.tables.iter().enumerate() {
            let cells = rows.iter().map(|r| Self::columns().iter().map(|c| r[c].clone()).collect()).collect();
            mem.add_table(&format!("t{i}"), Self::columns(), cells).map_err(|e| e.to_string())?;
        }
        let mut catalog = Catalog::new();
        catalog
            .register_source(SourceDescriptor::new(SOURCE, SourceKind::Relational, "").with_tables(mem.table_stats()))
            .map_err(|e| e.to_string())?;
        let mut adapters = Adapters::new();
        adapters.insert(SOURCE, Arc::new(mem));
        let gw = MockGateway::new();
        Executor::new(&catalog, &adapters, &gw)
            .execute(&self.graph)
            .map_err(|e| e.to_string())
    }

    /// Every node's filtered, projected rows.
    fn node_results(&self) -> Vec<Vec<Row>> {
        self.graph
            .nodes
            .iter()
            .zip(&self.tables)
            .map(|(node, rows)| {
                let filter = node.condition.as_ref().map(|c| match c {
                    Condition::And(items) => Condition::And(items[1..].to_vec()),
                    _ => Condition::And(Vec::new()),
                });
                rows.iter()
                    .filter(|r| filter.as_ref().is_none_or(|f| eval3(f, &|a: &str| r[a].clone()) == Some(true)))
                    .map(|r| node.attributes.iter().map(|a| (a.clone(), r[a].clone())).collect())
                    .collect()
            })
            .collect()
    }

    /// The filtered product in several join orders; all orders must agree.
    pub fn brute_force(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Row>, String> {
        let results = self.node_results();
        let aliases: Vec<String> = self.graph.nodes.iter().map(|n| n.alias.clone()).collect();
        let n = aliases.len();
        let mut orders: Vec<Vec<usize>> = permutations(n);
        if n == 4 {
            orders.shuffle(rng);
            orders.truncate(3);
        }
        let first = filtered_product(&results, &self.edges, &aliases, &orders[0]);
        for o in &orders[1..] {
            if filtered_product(&results, &self.edges, &aliases, o) != first {
                return Err(format!("oracle disagrees with itself for order {o:?}"));
            }
        }
        Ok(first)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

pub fn plan_equivalence() -> Outcome {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut rows, mut multi) = (0usize, 0usize);
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let expected = inst.brute_force(&mut rng)?;
        let got = inst.execute().map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(got.result.sorted_records() == expected, || {
            format!(
                "seed {seed}: executor gave {} rows, oracle {}",
                got.result.len(),
                expected.len()
            )
        })?;
        rows += expected.len();
        multi += usize::from(inst.graph.nodes.len() > 1);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{INSTANCES} graphs ({multi} with joins, {rows} result rows), 0 mismatches"))
}

/// Replays each trace against a model of the queue. Keys may only change through recorded
/// updates, which must be strict decreases; every pop must take the minimum.
pub fn greedy_trace() -> Outcome {
    let mut steps = 0usize;
    for seed in 0..INSTANCES {
        let inst = instance(seed);
        let exec = inst.execute().map_err(|e| format!("seed {seed}: {e}"))?;
        let mut model: BTreeMap<String, errag_core::Cardinality> =
            BTreeMap::new();
        let mut first = true;
        for (i, step) in exec.trace.iter().enumerate() {
            let mut observed: BTreeMap<String, _> = step.queue.iter().cloned().collect();
            observed.insert(step.popped.clone(), step.key);
            if first {
                first = false;
            } else {
                ensure(observed == model, || {
                    format!("seed {seed} step {i}: queue {observed:?} differs from replayed {model:?}")
                })?;
            }
            for (label, key) in &step.queue {
                ensure(step.key <= *key, || {
                    format!("seed {seed} step {i}: popped {} at {} while {label} waits at {key}", step.popped, step.key)
                })?;
            }
            model = observed;
            model.remove(&step.popped);
            let mut members: Vec<String> = step.popped.split('+').map(String::from).collect();
            if let Some(p) = &step.partner {
                model.remove(p);
                members.extend(p.split('+').map(String::from));
            }
            members.sort();
            model.insert(members.join("+"), errag_core::Cardinality::Finite(step.rows as u64));
            for u in &step.updates {
                ensure(u.new < u.old, || format!("seed {seed} step {i}: {} rose from {} to {}", u.neighbor, u.old, u.new))?;
                ensure(model.get(&u.neighbor) == Some(&u.old), || {
                    format!("seed {seed} step {i}: update of {} from an unseen key", u.neighbor)
                })?;
                model.insert(u.neighbor.clone(), u.new);
            }
            steps += 1;
        }
        ensure(model.len() <= 1, || format!("seed {seed}: {} groups left after the last step", model.len()))?;
    }
    Ok(format!("{INSTANCES} traces, {steps} pops, 0 violations"))
}
