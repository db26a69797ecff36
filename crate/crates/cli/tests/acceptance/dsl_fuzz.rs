use std::collections::BTreeSet;

use errag_core::chain::{auto_alias, is_identifier, parse_chain_bytes};
use errag_core::{parse_chain, render_chain, ApiChain, CmpOp, Condition, GetNode, JoinEdge, Value};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const CASES: usize = 10_000;
const RESERVED: [&str; 3] = ["content", "chunk", "search_key"];

fn ident(rng: &mut ChaCha8Rng) -> String {
    loop {
        let len = rng.gen_range(1..8);
        let first = *b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_".choose(rng).unwrap() as char;
        let rest: String = (1..len)
            .map(|_| *b"abcdefghijklmnopqrstuvwxyz0123456789_".choose(rng).unwrap() as char)
            .collect();
        let s = format!("{first}{rest}");
        if is_identifier(&s) {
            return s;
        }
    }
}

fn literal(rng: &mut ChaCha8Rng) -> Value {
    match rng.gen_range(0..10) {
        0 => Value::Null,
        1 => Value::Number(f64::from_bits(rng.gen::<u64>())).finite_or(0.5),
        2..=4 => Value::Number(f64::from(rng.gen_range(-1000..1000)) / f64::from(*[1, 2, 8, 1000].choose(rng).unwrap())),
        5 => {
            let pool = ['"', '\\', '\n', '\t', '\r', '\u{1}', 'é', '日', '{', '}', ',', ' ', '%', '_', '\u{7f}'];
            Value::Text((0..rng.gen_range(0..6)).map(|_| *pool.choose(rng).unwrap()).collect())
        }
        _ => Value::Text(ident(rng)),
    }
}

trait FiniteOr {
    fn finite_or(self, fallback: f64) -> Self;
}

impl FiniteOr for Value {
    fn finite_or(self, fallback: f64) -> Self {
        match self {
            Value::Number(n) if !n.is_finite() => Value::Number(fallback),
            v => v,
        }
    }
}

fn condition(rng: &mut ChaCha8Rng, depth: u32) -> Condition {
    let leaf = depth == 0 || rng.gen_bool(0.4);
    if leaf {
        return Condition::cmp(ident(rng), *CmpOp::ALL.choose(rng).unwrap(), literal(rng));
    }
    match rng.gen_range(0..3) {
        0 => Condition::Not(Box::new(condition(rng, depth - 1))),
        1 => Condition::And((0..rng.gen_range(2..4)).map(|_| condition(rng, depth - 1)).collect()),
        _ => Condition::Or((0..rng.gen_range(2..4)).map(|_| condition(rng, depth - 1)).collect()),
    }
}

pub fn chain(rng: &mut ChaCha8Rng) -> ApiChain {
    let n = rng.gen_range(1..5);
    let mut used = BTreeSet::new();
    let mut nodes: Vec<GetNode> = (0..n)
        .map(|i| {
            let alias = if rng.gen_bool(0.8) { auto_alias(i) } else { ident(rng) };
            let attrs: Vec<String> = (0..rng.gen_range(1..4)).map(|_| ident(rng)).collect();
            let cond = rng.gen_bool(0.8).then(|| condition(rng, 4));
            GetNode::new(alias, ident(rng), cond, attrs)
        })
        .collect();
    // auto aliases of other positions would clash; make explicit ones unique
    for (i, node) in nodes.iter_mut().enumerate() {
        let clash = |a: &str, used: &BTreeSet<String>| used.contains(a) || (0..n).any(|j| j != i && auto_alias(j) == a);
        while clash(&node.alias, &used) {
            node.alias = format!("{}_{i}", node.alias);
        }
        used.insert(node.alias.clone());
    }
    let pick = |rng: &mut ChaCha8Rng, node: &GetNode| -> String {
        if rng.gen_bool(0.2) {
            RESERVED.choose(rng).unwrap().to_string()
        } else {
            node.attributes.iter().collect::<Vec<_>>().choose(rng).unwrap().to_string()
        }
    };
    let edges = (1..n)
        .map(|i| {
            let (l, r) = (pick(rng, &nodes[i - 1]), pick(rng, &nodes[i]));
            if rng.gen_bool(0.3) {
                JoinEdge::semantic(l, ident(rng), r)
            } else {
                JoinEdge::relational(l, *CmpOp::ALL.choose(rng).unwrap(), r)
            }
        })
        .collect();
    let mut c = ApiChain { nodes, edges };
    c.validate().expect("generated chain is valid");
    c
}

fn mutate(rng: &mut ChaCha8Rng, text: &str) -> Vec<u8> {
    let mut b = text.as_bytes().to_vec();
    for _ in 0..rng.gen_range(1..4) {
        if b.is_empty() {
            break;
        }
        let i = rng.gen_range(0..b.len());
        match rng.gen_range(0..3) {
            0 => b[i] = rng.gen(),
            1 => {
                b.remove(i);
            }
            _ => b.insert(i, *b"(){}.,\"\\ =<>!~%".choose(rng).unwrap()),
        }
    }
    b
}

pub fn round_trip_and_totality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..CASES {
        let c = chain(&mut rng);
        let text = render_chain(&c);
        match parse_chain(&text) {
            Ok(back) if back == c => {}
            Ok(back) => return Err(format!("case {i}: {text} parsed to a different chain: {back:?}")),
            Err(e) => return Err(format!("case {i}: {text} failed to parse: {e}")),
        }
    }
    let (mut ok, mut rejected) = (0, 0);
    for i in 0..CASES {
        let bytes: Vec<u8> = if i % 2 == 0 {
            (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect()
        } else {
            let text = render_chain(&chain(&mut rng));
            mutate(&mut rng, &text)
        };
        match std::panic::catch_unwind(|| parse_chain_bytes(&bytes).is_ok()) {
            Ok(true) => ok += 1,
            Ok(false) => rejected += 1,
            Err(_) => return Err(format!("parser panicked on {:?}", String::from_utf8_lossy(&bytes))),
        }
    }
    // deep nesting stays an error, not a stack overflow
    let deep = format!("GET(A, {}x = 1{}, {{x}})", "(".repeat(100_000), ")".repeat(100_000));
    if parse_chain(&deep).is_ok() {
        return Err("100000 nested parentheses accepted".into());
    }
    Ok(format!("{CASES} round trips, {CASES} fuzz inputs ({ok} parsed, {rejected} rejected), no panics"))
}
