use errag_core::sources::relational::RelationalStore;
use errag_core::sources::{GetContext, MemoryAdapter, SourceAdapter};
use errag_core::{CmpOp, Condition, GetNode, MockGateway, Record, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracle::eval3;
use crate::Outcome;

const TREES: usize = 1000;
const ROWS: usize = 200;
const WORDS: [&str; 8] = ["alpha", "Beta", "gamma ray", "delta", "ALPHA", "o'neil", "50%", "x_y"];

fn columns() -> Vec<String> {
    ["id", "n", "m", "s", "t"].map(String::from).to_vec()
}

fn table(rng: &mut ChaCha8Rng) -> Vec<Vec<Value>> {
    (0..ROWS)
        .map(|i| {
            let num = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.1) {
                    Value::Null
                } else {
                    Value::Number(f64::from(rng.gen_range(-20..20)) / 4.0)
                }
            };
            let word = |rng: &mut ChaCha8Rng| {
                if rng.gen_bool(0.1) {
                    Value::Null
                } else {
                    Value::text(*WORDS.choose(rng).unwrap())
                }
            };
            vec![Value::Number(i as f64), num(rng), num(rng), word(rng), word(rng)]
        })
        .collect()
}

fn leaf(rng: &mut ChaCha8Rng) -> Condition {
    let text = rng.gen_bool(0.5);
    if text {
        let col = *["s", "t"].choose(rng).unwrap();
        let op = *CmpOp::ALL.choose(rng).unwrap();
        let value = match op {
            CmpOp::Like => Value::text(*["a%", "%a", "%a%", "_eta", "%\\%", "o'%", "%", "x_y"].choose(rng).unwrap()),
            CmpOp::Fuzzy => Value::text(*["alp", "RAY", "'", "", "zzz"].choose(rng).unwrap()),
            CmpOp::Eq | CmpOp::Ne if rng.gen_bool(0.15) => Value::Null,
            _ => Value::text(*WORDS.choose(rng).unwrap()),
        };
        Condition::cmp(col, op, value)
    } else {
        let col = *["id", "n", "m"].choose(rng).unwrap();
        let ops = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];
        let op = *ops.choose(rng).unwrap();
        let value = if matches!(op, CmpOp::Eq | CmpOp::Ne) && rng.gen_bool(0.15) {
            Value::Null
        } else if col == "id" {
            Value::Number(f64::from(rng.gen_range(0..ROWS as i32)))
        } else {
            Value::Number(f64::from(rng.gen_range(-20..20)) / 4.0)
        };
        Condition::cmp(col, op, value)
    }
}

fn tree(rng: &mut ChaCha8Rng, depth: u32) -> Condition {
    if depth == 0 || rng.gen_bool(0.35) {
        return leaf(rng);
    }
    match rng.gen_range(0..3) {
        0 => Condition::Not(Box::new(tree(rng, depth - 1))),
        1 => Condition::And((0..rng.gen_range(2..4)).map(|_| tree(rng, depth - 1)).collect()),
        _ => Condition::Or((0..rng.gen_range(2..4)).map(|_| tree(rng, depth - 1)).collect()),
    }
}

fn sorted(mut v: Vec<Record>) -> Vec<Record> {
    v.sort();
    v
}

pub fn translation_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = table(&mut rng);
    let mut store = RelationalStore::in_memory().map_err(|e| e.to_string())?;
    store.add_table("facts", columns(), rows.clone()).map_err(|e| e.to_string())?;
    let mut mem = MemoryAdapter::new();
    mem.add_table("facts", columns(), rows.clone()).map_err(|e| e.to_string())?;
    let gw = MockGateway::new();
    let ctx = GetContext { gateway: &gw, query: "" };

    let mut total = 0usize;
    for i in 0..TREES {
        let cond = tree(&mut rng, 4);
        let node = GetNode::new(
            "g1",
            "DB",
            Condition::conjoin(Some(&Condition::cmp("table", CmpOp::Eq, "facts")), vec![cond.clone()]),
            ["id", "s", "n"],
        );
        let sql = store.translate_get_to_sql(&node).map_err(|e| format!("tree {i}: {e}"))?;
        let engine = sorted(store.query_sql(&sql).map_err(|e| format!("tree {i}: {e}\n{sql}"))?);
        let interpreter = sorted(mem.get(&node, &ctx).map_err(|e| format!("tree {i}: {e}"))?);
        if engine != interpreter {
            return Err(format!(
                "tree {i}: engine {} rows, interpreter {} rows\n{sql}",
                engine.len(),
                interpreter.len()
            ));
        }
        // the independent evaluator agrees on which ids pass
        let lookup_cols = columns();
        let expected: usize = rows
            .iter()
            .filter(|r| {
                eval3(&cond, &|a: &str| r[lookup_cols.iter().position(|c| c == a).unwrap()].clone()) == Some(true)
            })
            .count();
        if expected != engine.len() {
            return Err(format!("tree {i}: reference evaluator expects {expected} rows, engine {}", engine.len()));
        }
        total += engine.len();
    }
    Ok(format!("{TREES} condition trees over {ROWS} rows, {total} matching rows, exact agreement"))
}
