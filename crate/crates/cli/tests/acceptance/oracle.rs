//! Reference semantics written independently of the library: three-valued comparison and
//! condition evaluation, and the filtered Cartesian product over GET results.

use std::collections::BTreeMap;

use errag_core::{CmpOp, Condition, Value};

/// Generators only pair numbers with numbers and text with text.
pub fn cmp3(left: &Value, op: CmpOp, right: &Value) -> Option<bool> {
    use std::cmp::Ordering::*;
    if let Value::Null = right {
        return match op {
            CmpOp::Eq => Some(matches!(left, Value::Null)),
            CmpOp::Ne => Some(!matches!(left, Value::Null)),
            _ => None,
        };
    }
    let ord = match (left, right) {
        (Value::Null, _) => return None,
        (Value::Number(a), Value::Number(b)) => a.partial_cmp(b)?,
        (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
        (a, b) => panic!("oracle does not mix types: {a:?} vs {b:?}"),
    };
    Some(match op {
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
        CmpOp::Lt => ord == Less,
        CmpOp::Le => ord != Greater,
        CmpOp::Gt => ord == Greater,
        CmpOp::Ge => ord != Less,
        CmpOp::Like => like(&text(left).chars().collect::<Vec<_>>(), &text(right).chars().collect::<Vec<_>>()),
        CmpOp::Fuzzy => text(left).to_lowercase().contains(&text(right).to_lowercase()),
    })
}

fn text(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        Value::Number(n) => format!("{n}"),
        Value::Null => String::new(),
    }
}

/// `%` any run, `_` one character, everything else literal.
fn like(s: &[char], p: &[char]) -> bool {
    match p.first() {
        None => s.is_empty(),
        Some('%') => (0..=s.len()).any(|i| like(&s[i..], &p[1..])),
        Some('_') => !s.is_empty() && like(&s[1..], &p[1..]),
        Some(c) => s.first() == Some(c) && like(&s[1..], &p[1..]),
    }
}

pub fn eval3(cond: &Condition, row: &dyn Fn(&str) -> Value) -> Option<bool> {
    match cond {
        Condition::Cmp { attr, op, value } => cmp3(&row(attr), *op, value),
        Condition::Not(c) => eval3(c, row).map(|b| !b),
        Condition::And(items) => items.iter().fold(Some(true), |acc, c| match (acc, eval3(c, row)) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        }),
        Condition::Or(items) => items.iter().fold(Some(false), |acc, c| match (acc, eval3(c, row)) {
            (Some(true), _) | (_, Some(true)) => Some(true),
            (Some(false), Some(false)) => Some(false),
            _ => None,
        }),
    }
}

pub type Row = BTreeMap<String, Value>;

/// One edge of the oracle's graph: `(left node, left attr, op, right node, right attr)`.
pub type Edge = (usize, String, CmpOp, usize, String);

/// Join the per-node results in `order`, applying each edge as soon as both ends are present.
pub fn filtered_product(results: &[Vec<Row>], edges: &[Edge], aliases: &[String], order: &[usize]) -> Vec<Row> {
    let mut acc: Vec<Row> = vec![Row::new()];
    let mut present = vec![false; results.len()];
    for &n in order {
        present[n] = true;
        let ready: Vec<&Edge> = edges
            .iter()
            .filter(|e| (e.0 == n || e.3 == n) && present[e.0] && present[e.3])
            .collect();
        let mut next = Vec::new();
        for partial in &acc {
            for r in &results[n] {
                let mut row = partial.clone();
                for (k, v) in r {
                    row.insert(format!("{}.{k}", aliases[n]), v.clone());
                }
                let ok = ready.iter().all(|(l, la, op, r, ra)| {
                    let lv = &row[&format!("{}.{la}", aliases[*l])];
                    let rv = &row[&format!("{}.{ra}", aliases[*r])];
                    // a null on either side of a join predicate never matches
                    !lv.is_null() && !rv.is_null() && cmp3(lv, *op, rv) == Some(true)
                });
                if ok {
                    next.push(row);
                }
            }
        }
        acc = next;
    }
    acc.sort();
    acc
}
