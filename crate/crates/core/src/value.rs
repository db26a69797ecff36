//! Scalar values, comparison operators and records shared by every source.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A scalar attribute value or condition literal.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Number(f64),
    Text(String),
}

/// One entity: attribute name to value.
pub type Record = BTreeMap<String, Value>;

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Text(s) => s.trim().parse::<f64>().ok().filter(|n| n.is_finite()),
            Value::Null => None,
        }
    }

    /// Plain textual form, used when a value is fed back into a prompt or a key lookup.
    pub fn to_plain_string(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Number(n) => format_number(*n),
            Value::Text(s) => s.clone(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Number(_) => 1,
            Value::Text(_) => 2,
        }
    }
}

/// Total order used only for sorting and multiset comparison; not SQL semantics.
impl Eq for Value {}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Number(a), Value::Number(b)) => a.total_cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Number(n) => f.write_str(&format_number(*n)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<f64> for Value {
    fn from(n: f64) -> Self {
        Value::Number(n)
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Number(n as f64)
    }
}

/// Shortest round-tripping decimal form without exponent.
pub fn format_number(n: f64) -> String {
    format!("{n}")
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Null => serializer.serialize_none(),
            Value::Number(n) => {
                if n.fract() == 0.0 && n.abs() < 9.0e15 {
                    serializer.serialize_i64(*n as i64)
                } else {
                    serializer.serialize_f64(*n)
                }
            }
            Value::Text(s) => serializer.serialize_str(s),
        }
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        Ok(Value::from_json(&raw))
    }
}

impl Value {
    /// Lossy conversion from arbitrary JSON; booleans and nested values become text.
    pub fn from_json(raw: &serde_json::Value) -> Self {
        match raw {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Number(n) => Value::Number(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => Value::Text(s.clone()),
            other => Value::Text(other.to_string()),
        }
    }
}

/// Comparison operator of a condition or a relational join edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Like,
    /// Fuzzy match: exact, then case-insensitive partial, then embedding fallback.
    Fuzzy,
}

impl CmpOp {
    pub const ALL: [CmpOp; 8] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
        CmpOp::Like,
        CmpOp::Fuzzy,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Like => "LIKE",
            CmpOp::Fuzzy => "~",
        }
    }

    /// Operator with operands swapped (`a op b` iff `b flip(op) a`); `None` for pattern operators.
    pub fn flipped(self) -> Option<CmpOp> {
        match self {
            CmpOp::Eq => Some(CmpOp::Eq),
            CmpOp::Ne => Some(CmpOp::Ne),
            CmpOp::Lt => Some(CmpOp::Gt),
            CmpOp::Le => Some(CmpOp::Ge),
            CmpOp::Gt => Some(CmpOp::Lt),
            CmpOp::Ge => Some(CmpOp::Le),
            CmpOp::Like | CmpOp::Fuzzy => None,
        }
    }

    pub fn is_range(self) -> bool {
        matches!(self, CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Three-valued comparison `left op right`. `None` is SQL UNKNOWN.
///
/// A `Null` right operand with `=`/`!=` tests for null-ness (`IS NULL` / `IS NOT NULL`);
/// any other comparison touching a null is unknown. Mixed number/text operands compare
/// numerically when the text parses as a number, otherwise as text.
pub fn compare(left: &Value, op: CmpOp, right: &Value) -> Option<bool> {
    if right.is_null() {
        return match op {
            CmpOp::Eq => Some(left.is_null()),
            CmpOp::Ne => Some(!left.is_null()),
            _ => None,
        };
    }
    if left.is_null() {
        return None;
    }
    match op {
        CmpOp::Like => {
            let (s, p) = (left.to_plain_string(), right.to_plain_string());
            Some(like_match(&s, &p))
        }
        CmpOp::Fuzzy => {
            let (s, p) = (left.to_plain_string(), right.to_plain_string());
            Some(s.to_lowercase().contains(&p.to_lowercase()))
        }
        _ => {
            let ord = match (left, right) {
                (Value::Text(a), Value::Text(b)) => a.cmp(b),
                _ => match (left.as_number(), right.as_number()) {
                    (Some(a), Some(b)) => a.partial_cmp(&b)?,
                    _ => left.to_plain_string().cmp(&right.to_plain_string()),
                },
            };
            Some(match op {
                CmpOp::Eq => ord == Ordering::Equal,
                CmpOp::Ne => ord != Ordering::Equal,
                CmpOp::Lt => ord == Ordering::Less,
                CmpOp::Le => ord != Ordering::Greater,
                CmpOp::Gt => ord == Ordering::Greater,
                CmpOp::Ge => ord != Ordering::Less,
                CmpOp::Like | CmpOp::Fuzzy => unreachable!(),
            })
        }
    }
}

/// Case-sensitive SQL `LIKE` with `%` and `_` wildcards and no escape character.
pub fn like_match(subject: &str, pattern: &str) -> bool {
    let s: Vec<char> = subject.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    // dp over pattern prefix; reachable[i] = subject prefix of length i matched
    let mut reachable = vec![false; s.len() + 1];
    reachable[0] = true;
    for &pc in &p {
        let mut next = vec![false; s.len() + 1];
        match pc {
            '%' => {
                let mut any = false;
                for i in 0..=s.len() {
                    any |= reachable[i];
                    next[i] = any;
                }
            }
            '_' => {
                next[1..=s.len()].copy_from_slice(&reachable[..s.len()]);
            }
            c => {
                for i in 0..s.len() {
                    next[i + 1] = reachable[i] && s[i] == c;
                }
            }
        }
        reachable = next;
    }
    reachable[s.len()]
}
