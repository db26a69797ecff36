//! The GET/JOIN chain language: AST, parser and canonical renderer.
//!
//! ```text
//! chain    := get ( "." "JOIN" "(" joinspec ")" "." get )*
//! get      := "GET" "(" source "," cond? "," "{" attrs "}" ")" ( "AS" ident )?
//! joinspec := "left." ident op "right." ident | ident "," ident "," ident
//! cond     := or ;  or := and ("OR" and)* ;  and := not ("AND" not)*
//! not      := "NOT" not | "(" or ")" | ident op literal
//! ```
//!
//! Operators are `= != < <= > >= LIKE ~`. Strings are double-quoted with backslash
//! escapes, numbers are decimal, and `null` is the null literal.

mod lexer;
mod parser;
mod render;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{CmpOp, Value};

pub use parser::{parse_chain, parse_chain_bytes, parse_condition};
pub use render::{is_identifier, render_chain, render_condition};

/// Full page or document text.
pub const CONTENT: &str = "content";
/// Retrieved chunk text.
pub const CHUNK: &str = "chunk";
/// Entity lookup key.
pub const SEARCH_KEY: &str = "search_key";
/// Top-level conjunct naming the relational table.
pub const TABLE_SELECTOR: &str = "table";

pub fn is_reserved_attribute(name: &str) -> bool {
    matches!(name, CONTENT | CHUNK | SEARCH_KEY)
}

/// Maximum nesting of parentheses and `NOT` accepted by the parser.
pub const MAX_NESTING: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("invalid chain: {0}")]
    Validation(String),
}

/// Boolean filter over one source's attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Condition {
    Or(Vec<Condition>),
    And(Vec<Condition>),
    Not(Box<Condition>),
    Cmp { attr: String, op: CmpOp, value: Value },
}

impl Condition {
    pub fn cmp(attr: impl Into<String>, op: CmpOp, value: impl Into<Value>) -> Self {
        Condition::Cmp {
            attr: attr.into(),
            op,
            value: value.into(),
        }
    }

    /// Disjunction; a single operand is returned unwrapped.
    pub fn or(mut items: Vec<Condition>) -> Self {
        if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::Or(items)
        }
    }

    /// Conjunction that flattens nested top-level `And`s; a single operand is returned unwrapped.
    pub fn and(items: Vec<Condition>) -> Self {
        let mut flat = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Condition::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Condition::And(flat)
        }
    }

    /// Conjoin extra filters onto an optional base condition.
    pub fn conjoin(base: Option<&Condition>, extra: Vec<Condition>) -> Option<Condition> {
        let mut items: Vec<Condition> = base.cloned().into_iter().collect();
        items.extend(extra);
        if items.is_empty() {
            None
        } else {
            Some(Condition::and(items))
        }
    }

    /// Top-level conjuncts: the children of a root `And`, otherwise the condition itself.
    pub fn conjuncts(&self) -> Vec<&Condition> {
        match self {
            Condition::And(items) => items.iter().collect(),
            other => vec![other],
        }
    }

    /// Every attribute name mentioned anywhere in the tree.
    pub fn attributes(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.visit(&mut |c| {
            if let Condition::Cmp { attr, .. } = c {
                out.insert(attr.as_str());
            }
        });
        out
    }

    /// Every literal in the tree, left to right.
    pub fn literals(&self) -> Vec<&Value> {
        let mut out = Vec::new();
        self.visit(&mut |c| {
            if let Condition::Cmp { value, .. } = c {
                out.push(value);
            }
        });
        out
    }

    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Condition)) {
        f(self);
        match self {
            Condition::Or(items) | Condition::And(items) => {
                items.iter().for_each(|c| c.visit(f));
            }
            Condition::Not(inner) => inner.visit(f),
            Condition::Cmp { .. } => {}
        }
    }

    /// Three-valued evaluation against a record whose keys are plain attribute names.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Value) -> Option<bool> {
        match self {
            Condition::Cmp { attr, op, value } => crate::value::compare(&lookup(attr), *op, value),
            Condition::Not(inner) => inner.eval(lookup).map(|b| !b),
            Condition::And(items) => {
                let mut unknown = false;
                for item in items {
                    match item.eval(lookup) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        Some(true) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            Condition::Or(items) => {
                let mut unknown = false;
                for item in items {
                    match item.eval(lookup) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        Some(false) => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
        }
    }

    /// Values bound to `search_key` by equality at the top level.
    ///
    /// A conjunct is either `search_key = v` or an `OR` made only of such comparisons; several
    /// binding conjuncts intersect. `None` when nothing binds the key.
    pub fn search_keys(&self) -> Option<Vec<String>> {
        let mut bound: Option<Vec<String>> = None;
        for conjunct in self.conjuncts() {
            if let Some(keys) = key_disjunction(conjunct) {
                bound = Some(match bound {
                    None => keys,
                    Some(prev) => prev.into_iter().filter(|k| keys.contains(k)).collect(),
                });
            }
        }
        bound
    }
}

fn key_disjunction(cond: &Condition) -> Option<Vec<String>> {
    fn single(c: &Condition) -> Option<String> {
        match c {
            Condition::Cmp {
                attr,
                op: CmpOp::Eq,
                value,
            } if attr == SEARCH_KEY && !value.is_null() => Some(value.to_plain_string()),
            _ => None,
        }
    }
    match cond {
        Condition::Or(items) => {
            let mut keys = Vec::new();
            for item in items {
                let k = single(item)?;
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
            Some(keys)
        }
        other => single(other).map(|k| vec![k]),
    }
}

/// `GET(source, condition, {attributes})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GetNode {
    pub alias: String,
    pub source: String,
    pub condition: Option<Condition>,
    /// Requested attributes.
    pub attributes: BTreeSet<String>,
    /// Reserved attributes added because a join edge consumes them; not part of the output.
    pub internal: BTreeSet<String>,
}

impl GetNode {
    pub fn new<I, S>(alias: impl Into<String>, source: impl Into<String>, condition: Option<Condition>, attrs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        GetNode {
            alias: alias.into(),
            source: source.into(),
            condition,
            attributes: attrs.into_iter().map(Into::into).collect(),
            internal: BTreeSet::new(),
        }
    }

    /// Requested plus internal attributes.
    pub fn all_attributes(&self) -> BTreeSet<String> {
        self.attributes.union(&self.internal).cloned().collect()
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.contains(name) || self.internal.contains(name)
    }
}

/// The condition carried by a JOIN.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JoinEdge {
    /// `left.left_attr op right.right_attr`
    Relational {
        left_attr: String,
        op: CmpOp,
        right_attr: String,
    },
    /// `relation(left.left_attr) = right.right_attr`, the relation resolved by extraction from text.
    SemanticTriple {
        left_attr: String,
        relation: String,
        right_attr: String,
    },
}

impl JoinEdge {
    pub fn relational(left: impl Into<String>, op: CmpOp, right: impl Into<String>) -> Self {
        JoinEdge::Relational {
            left_attr: left.into(),
            op,
            right_attr: right.into(),
        }
    }

    pub fn semantic(left: impl Into<String>, relation: impl Into<String>, right: impl Into<String>) -> Self {
        JoinEdge::SemanticTriple {
            left_attr: left.into(),
            relation: relation.into(),
            right_attr: right.into(),
        }
    }

    pub fn left_attr(&self) -> &str {
        match self {
            JoinEdge::Relational { left_attr, .. } | JoinEdge::SemanticTriple { left_attr, .. } => left_attr,
        }
    }

    pub fn right_attr(&self) -> &str {
        match self {
            JoinEdge::Relational { right_attr, .. } | JoinEdge::SemanticTriple { right_attr, .. } => right_attr,
        }
    }
}

/// Alternating GET/JOIN chain; `edges[i]` links `nodes[i]` and `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiChain {
    pub nodes: Vec<GetNode>,
    pub edges: Vec<JoinEdge>,
}

pub fn auto_alias(index: usize) -> String {
    format!("g{}", index + 1)
}

impl ApiChain {
    /// Check the chain invariants and add reserved join attributes to `internal`.
    pub fn validate(&mut self) -> Result<(), ChainError> {
        if self.nodes.is_empty() {
            return Err(ChainError::Validation("chain has no GET".into()));
        }
        if self.edges.len() + 1 != self.nodes.len() {
            return Err(ChainError::Validation(format!(
                "{} nodes need {} joins, found {}",
                self.nodes.len(),
                self.nodes.len() - 1,
                self.edges.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if node.source.is_empty() {
                return Err(ChainError::Validation("empty source name".into()));
            }
            if node.attributes.is_empty() {
                return Err(ChainError::Validation(format!("{} requests no attributes", node.alias)));
            }
            if !seen.insert(node.alias.clone()) {
                return Err(ChainError::Validation(format!("duplicate alias {}", node.alias)));
            }
        }
        for (i, edge) in self.edges.iter().enumerate() {
            if let JoinEdge::SemanticTriple { relation, .. } = edge {
                if relation.is_empty() {
                    return Err(ChainError::Validation("empty relation name".into()));
                }
            }
            for (node, attr) in [(i, edge.left_attr()), (i + 1, edge.right_attr())] {
                let node = &mut self.nodes[node];
                if node.attributes.contains(attr) {
                    continue;
                }
                if is_reserved_attribute(attr) {
                    node.internal.insert(attr.to_string());
                } else {
                    return Err(ChainError::Validation(format!(
                        "join attribute {attr} is not among the attributes of {}",
                        node.alias
                    )));
                }
            }
        }
        Ok(())
    }
}
