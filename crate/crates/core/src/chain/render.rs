use std::fmt::Write;

use super::lexer::{is_ident_continue, is_ident_start};
use super::{auto_alias, ApiChain, Condition, JoinEdge};
use crate::value::{format_number, Value};

/// Canonical text: single spaces, sorted attributes, auto aliases omitted.
pub fn render_chain(chain: &ApiChain) -> String {
    let mut out = String::new();
    for (i, node) in chain.nodes.iter().enumerate() {
        if i > 0 {
            out.push_str(".JOIN(");
            match &chain.edges[i - 1] {
                JoinEdge::Relational {
                    left_attr,
                    op,
                    right_attr,
                } => {
                    let _ = write!(out, "left.{left_attr} {op} right.{right_attr}");
                }
                JoinEdge::SemanticTriple {
                    left_attr,
                    relation,
                    right_attr,
                } => {
                    let _ = write!(out, "{left_attr}, {relation}, {right_attr}");
                }
            }
            out.push_str(").");
        }
        let _ = write!(out, "GET({}, ", node.source);
        if let Some(cond) = &node.condition {
            out.push_str(&render_condition(cond));
        }
        out.push_str(", {");
        let attrs: Vec<&str> = node.attributes.iter().map(String::as_str).collect();
        out.push_str(&attrs.join(", "));
        out.push_str("})");
        if node.alias != auto_alias(i) {
            let _ = write!(out, " AS {}", node.alias);
        }
    }
    out
}

pub fn render_condition(cond: &Condition) -> String {
    let mut out = String::new();
    write_cond(&mut out, cond);
    out
}

fn write_cond(out: &mut String, cond: &Condition) {
    match cond {
        Condition::Cmp { attr, op, value } => {
            let _ = write!(out, "{attr} {op} ");
            write_literal(out, value);
        }
        Condition::Not(inner) => {
            out.push_str("NOT ");
            write_grouped(out, inner, matches!(**inner, Condition::And(_) | Condition::Or(_)));
        }
        Condition::And(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(" AND ");
                }
                write_grouped(out, item, matches!(item, Condition::And(_) | Condition::Or(_)));
            }
        }
        Condition::Or(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(" OR ");
                }
                write_grouped(out, item, matches!(item, Condition::Or(_)));
            }
        }
    }
}

fn write_grouped(out: &mut String, cond: &Condition, parens: bool) {
    if parens {
        out.push('(');
        write_cond(out, cond);
        out.push(')');
    } else {
        write_cond(out, cond);
    }
}

fn write_literal(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Number(n) => out.push_str(&format_number(*n)),
        Value::Text(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    '\r' => out.push_str("\\r"),
                    c if c.is_control() => {
                        let _ = write!(out, "\\u{{{:x}}}", c as u32);
                    }
                    c => out.push(c),
                }
            }
            out.push('"');
        }
    }
}

/// Whether `s` is accepted by the grammar as an identifier.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if is_ident_start(c))
        && chars.all(is_ident_continue)
        && !super::parser::is_keyword(s)
}
