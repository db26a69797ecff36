//! A small template language for turning execution results into answers.
//!
//! Literal text with `{expr}` holes (`{{` and `}}` for literal braces). Expressions see the
//! result records as `Data`; `map`, `filter` and `sort_by` bind each element to `r`.
//!
//! ```text
//! top-3 by revenue: {join_str(map(top(sort_by(Data, num(r.revenue), desc), 3), r.company), ", ")}
//! ```

mod normalize;

use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::executor::EntitySet;
use crate::value::{format_number, Record, Value};

pub use normalize::{normalize_date, normalize_number, normalize_number_with, NormalizeError, UnitTable};

/// Output of every failed evaluation.
pub const NO_DATA: &str = "no data";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("template syntax error at {position}: {message}")]
    Syntax { position: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unknown field {0}")]
    UnknownField(String),
    #[error("ambiguous field {0}")]
    AmbiguousField(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("index {0} out of range")]
    Index(i64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("`r` used outside map, filter or sort_by")]
    UnboundRecord,
    #[error("{0} of an empty list")]
    Empty(&'static str),
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Str(String),
    Bool(bool),
    Null,
    Data,
    Rec,
    /// `asc` / `desc` arguments of `sort_by`.
    Order(bool),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    SortBy,
    Top,
    Filter,
    Map,
    Sum,
    Avg,
    Min,
    Max,
    Len,
    Round,
    Num,
    Date,
    JoinStr,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sort_by" => Func::SortBy,
            "top" => Func::Top,
            "filter" => Func::Filter,
            "map" => Func::Map,
            "sum" => Func::Sum,
            "avg" => Func::Avg,
            "min" => Func::Min,
            "max" => Func::Max,
            "len" => Func::Len,
            "round" => Func::Round,
            "num" => Func::Num,
            "date" => Func::Date,
            "join_str" => Func::JoinStr,
            _ => return None,
        })
    }

    /// Allowed argument counts.
    fn arity(self) -> (usize, usize) {
        match self {
            Func::SortBy => (2, 3),
            Func::Top | Func::Filter | Func::Map | Func::JoinStr => (2, 2),
            Func::Round => (1, 2),
            _ => (1, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Text(String),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTemplate {
    pub segments: Vec<Segment>,
}

/// Values during evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum PValue {
    Null,
    Num(f64),
    Str(String),
    Bool(bool),
    List(Vec<PValue>),
    Rec(Record),
}

impl From<&Value> for PValue {
    fn from(v: &Value) -> Self {
        match v {
            Value::Null => PValue::Null,
            Value::Number(n) => PValue::Num(*n),
            Value::Text(s) => PValue::Str(s.clone()),
        }
    }
}

impl fmt::Display for PValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PValue::Null => f.write_str("null"),
            PValue::Num(n) => f.write_str(&format_number(*n)),
            PValue::Str(s) => f.write_str(s),
            PValue::Bool(b) => write!(f, "{b}"),
            PValue::List(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            PValue::Rec(r) => {
                f.write_str("{")?;
                for (i, (k, v)) in r.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                f.write_str("}")
            }
        }
    }
}

impl PValue {
    fn kind(&self) -> &'static str {
        match self {
            PValue::Null => "null",
            PValue::Num(_) => "number",
            PValue::Str(_) => "string",
            PValue::Bool(_) => "bool",
            PValue::List(_) => "list",
            PValue::Rec(_) => "record",
        }
    }
}

// ---- parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Str(String),
    Ident(String),
    Sym(&'static str),
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl Lexer<'_> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, TemplateError> {
        Err(TemplateError::Syntax {
            position: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next().filter(|c| c.is_whitespace()) {
            self.pos += c.len_utf8();
        }
    }

    /// Next token, or `None` at `}` / end of input (not consumed).
    fn peek(&mut self) -> Result<Option<(Tok, usize)>, TemplateError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let Some(c) = rest.chars().next() else { return Ok(None) };
        if c == '}' {
            return Ok(None);
        }
        const SYMS: [&str; 19] = [
            "==", "!=", "<=", ">=", "&&", "||", "<", ">", "+", "-", "*", "/", "\u{d7}", "\u{f7}", "(", ")", "[", "]", ",",
        ];
        if c.is_ascii_digit() {
            let end = rest
                .char_indices()
                .find(|&(_, ch)| !(ch.is_ascii_digit() || ch == '.'))
                .map_or(rest.len(), |(i, _)| i);
            return match rest[..end].parse::<f64>() {
                Ok(n) => Ok(Some((Tok::Num(n), end))),
                Err(_) => self.err(format!("bad number {:?}", &rest[..end])),
            };
        }
        if c == '"' || c == '\'' {
            let mut out = String::new();
            let mut chars = rest.char_indices().skip(1);
            while let Some((i, ch)) = chars.next() {
                match ch {
                    '\\' => match chars.next() {
                        Some((_, 'n')) => out.push('\n'),
                        Some((_, 't')) => out.push('\t'),
                        Some((_, e)) => out.push(e),
                        None => break,
                    },
                    q if q == c => return Ok(Some((Tok::Str(out), i + 1))),
                    other => out.push(other),
                }
            }
            return self.err("unterminated string");
        }
        if c.is_alphabetic() || c == '_' {
            let end = rest
                .char_indices()
                .find(|&(_, ch)| !(ch.is_alphanumeric() || ch == '_'))
                .map_or(rest.len(), |(i, _)| i);
            return Ok(Some((Tok::Ident(rest[..end].to_string()), end)));
        }
        if c == '.' {
            return Ok(Some((Tok::Sym("."), 1)));
        }
        for s in SYMS {
            if rest.starts_with(s) {
                return Ok(Some((Tok::Sym(s), s.len())));
            }
        }
        self.err(format!("unexpected character {c:?}"))
    }

    fn next(&mut self) -> Result<Option<Tok>, TemplateError> {
        Ok(self.peek()?.map(|(t, n)| {
            self.pos += n;
            t
        }))
    }

    fn eat_sym(&mut self, sym: &str) -> Result<bool, TemplateError> {
        if let Some((Tok::Sym(s), n)) = self.peek()? {
            if s == sym {
                self.pos += n;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn eat_word(&mut self, word: &str) -> Result<bool, TemplateError> {
        if let Some((Tok::Ident(s), n)) = self.peek()? {
            if s == word {
                self.pos += n;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), TemplateError> {
        if self.eat_sym(sym)? {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`"))
        }
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    depth: usize,
}

const MAX_DEPTH: usize = 64;

impl Parser<'_> {
    fn expr(&mut self) -> Result<Expr, TemplateError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.lex.err("expression nested too deeply");
        }
        let e = self.or();
        self.depth -= 1;
        e
    }

    fn or(&mut self) -> Result<Expr, TemplateError> {
        let mut e = self.and()?;
        while self.lex.eat_word("or")? || self.lex.eat_sym("||")? {
            e = Expr::Bin(BinOp::Or, Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, TemplateError> {
        let mut e = self.not()?;
        while self.lex.eat_word("and")? || self.lex.eat_sym("&&")? {
            e = Expr::Bin(BinOp::And, Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Expr, TemplateError> {
        if self.lex.eat_word("not")? {
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return self.lex.err("expression nested too deeply");
            }
            let inner = self.not()?;
            self.depth -= 1;
            return Ok(Expr::Not(Box::new(inner)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, TemplateError> {
        let e = self.add()?;
        for (sym, op) in [
            ("==", BinOp::Eq),
            ("!=", BinOp::Ne),
            ("<=", BinOp::Le),
            (">=", BinOp::Ge),
            ("<", BinOp::Lt),
            (">", BinOp::Gt),
        ] {
            if self.lex.eat_sym(sym)? {
                return Ok(Expr::Bin(op, Box::new(e), Box::new(self.add()?)));
            }
        }
        Ok(e)
    }

    fn add(&mut self) -> Result<Expr, TemplateError> {
        let mut e = self.mul()?;
        loop {
            let op = if self.lex.eat_sym("+")? {
                BinOp::Add
            } else if self.lex.eat_sym("-")? {
                BinOp::Sub
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.mul()?));
        }
    }

    fn mul(&mut self) -> Result<Expr, TemplateError> {
        let mut e = self.unary()?;
        loop {
            let op = if self.lex.eat_sym("*")? || self.lex.eat_sym("\u{d7}")? {
                BinOp::Mul
            } else if self.lex.eat_sym("/")? || self.lex.eat_sym("\u{f7}")? {
                BinOp::Div
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, TemplateError> {
        if self.lex.eat_sym("-")? {
            self.depth += 1;
            if self.depth > MAX_DEPTH {
                return self.lex.err("expression nested too deeply");
            }
            let inner = self.unary()?;
            self.depth -= 1;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, TemplateError> {
        let mut e = self.primary()?;
        loop {
            if self.lex.eat_sym(".")? {
                let name = match self.lex.next()? {
                    Some(Tok::Ident(s)) | Some(Tok::Str(s)) => s,
                    _ => return self.lex.err("expected field name after `.`"),
                };
                e = Expr::Field(Box::new(e), name);
            } else if self.lex.eat_sym("[")? {
                let idx = self.expr()?;
                self.lex.expect_sym("]")?;
                e = Expr::Index(Box::new(e), Box::new(idx));
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, TemplateError> {
        let start = self.lex.pos;
        match self.lex.next()? {
            Some(Tok::Num(n)) => Ok(Expr::Num(n)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::Sym("(")) => {
                let e = self.expr()?;
                self.lex.expect_sym(")")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => match name.as_str() {
                "Data" => Ok(Expr::Data),
                "r" => Ok(Expr::Rec),
                "true" | "True" => Ok(Expr::Bool(true)),
                "false" | "False" => Ok(Expr::Bool(false)),
                "null" | "None" => Ok(Expr::Null),
                "asc" => Ok(Expr::Order(true)),
                "desc" => Ok(Expr::Order(false)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        self.lex.pos = start;
                        return self.lex.err(format!("unknown name {name}"));
                    };
                    self.lex.expect_sym("(")?;
                    let mut args = Vec::new();
                    if !self.lex.eat_sym(")")? {
                        loop {
                            args.push(self.expr()?);
                            if self.lex.eat_sym(")")? {
                                break;
                            }
                            self.lex.expect_sym(",")?;
                        }
                    }
                    let (lo, hi) = func.arity();
                    if args.len() < lo || args.len() > hi {
                        self.lex.pos = start;
                        return self.lex.err(format!("{name} takes {lo}..={hi} arguments, got {}", args.len()));
                    }
                    Ok(Expr::Call(func, args))
                }
            },
            Some(Tok::Sym(s)) => {
                self.lex.pos = start;
                self.lex.err(format!("unexpected `{s}`"))
            }
            None => self.lex.err("expected an expression"),
        }
    }
}

/// Parse template text.
pub fn parse_template(text: &str) -> Result<ResultTemplate, TemplateError> {
    let mut segments = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if rest.starts_with("{{") {
            lit.push('{');
            i += 2;
        } else if rest.starts_with("}}") {
            lit.push('}');
            i += 2;
        } else if rest.starts_with('}') {
            return Err(TemplateError::Syntax {
                position: i,
                message: "unmatched `}`".into(),
            });
        } else if rest.starts_with('{') {
            if !lit.is_empty() {
                segments.push(Segment::Text(std::mem::take(&mut lit)));
            }
            let mut p = Parser {
                lex: Lexer { src: text, pos: i + 1 },
                depth: 0,
            };
            let e = p.expr()?;
            p.lex.skip_ws();
            if !text[p.lex.pos..].starts_with('}') {
                return p.lex.err("expected `}`");
            }
            segments.push(Segment::Expr(e));
            i = p.lex.pos + 1;
        } else {
            let c = rest.chars().next().unwrap();
            lit.push(c);
            i += c.len_utf8();
        }
    }
    if !lit.is_empty() {
        segments.push(Segment::Text(lit));
    }
    Ok(ResultTemplate { segments })
}

// ---- evaluation

struct Env<'a> {
    data: &'a PValue,
    units: &'a UnitTable,
}

fn field(rec: &Record, name: &str) -> Result<PValue, EvalError> {
    if let Some(v) = rec.get(name) {
        return Ok(v.into());
    }
    let suffix = format!(".{name}");
    let mut hits = rec.iter().filter(|(k, _)| k.ends_with(&suffix));
    match (hits.next(), hits.next()) {
        (Some((_, v)), None) => Ok(v.into()),
        (Some(_), Some(_)) => Err(EvalError::AmbiguousField(name.to_string())),
        _ => Err(EvalError::UnknownField(name.to_string())),
    }
}

fn as_list(v: PValue, what: &str) -> Result<Vec<PValue>, EvalError> {
    match v {
        PValue::List(xs) => Ok(xs),
        other => Err(EvalError::Type(format!("{what} expects a list, got {}", other.kind()))),
    }
}

fn as_num(v: &PValue, units: &UnitTable) -> Result<f64, EvalError> {
    match v {
        PValue::Num(n) => Ok(*n),
        PValue::Str(s) => Ok(normalize_number_with(s, units)?),
        other => Err(EvalError::Type(format!("expected a number, got {}", other.kind()))),
    }
}

fn as_bool(v: &PValue) -> Result<bool, EvalError> {
    match v {
        PValue::Bool(b) => Ok(*b),
        other => Err(EvalError::Type(format!("expected a bool, got {}", other.kind()))),
    }
}

/// Total order for sort keys: null < numbers < strings < bools.
fn key_cmp(a: &PValue, b: &PValue) -> Result<Ordering, EvalError> {
    let rank = |v: &PValue| match v {
        PValue::Null => Ok(0),
        PValue::Num(_) => Ok(1),
        PValue::Str(_) => Ok(2),
        PValue::Bool(_) => Ok(3),
        other => Err(EvalError::Type(format!("cannot sort by a {}", other.kind()))),
    };
    let (ra, rb) = (rank(a)?, rank(b)?);
    Ok(match (a, b) {
        (PValue::Num(x), PValue::Num(y)) => x.total_cmp(y),
        (PValue::Str(x), PValue::Str(y)) => x.cmp(y),
        (PValue::Bool(x), PValue::Bool(y)) => x.cmp(y),
        _ => ra.cmp(&rb),
    })
}

fn compare_values(op: BinOp, a: &PValue, b: &PValue, units: &UnitTable) -> Result<bool, EvalError> {
    let ord = match (a, b) {
        (PValue::Num(_), PValue::Str(_)) | (PValue::Str(_), PValue::Num(_)) => {
            as_num(a, units)?.partial_cmp(&as_num(b, units)?)
        }
        (PValue::Num(x), PValue::Num(y)) => x.partial_cmp(y),
        (PValue::Str(x), PValue::Str(y)) => Some(x.cmp(y)),
        _ if matches!(op, BinOp::Eq | BinOp::Ne) => return Ok((a == b) == (op == BinOp::Eq)),
        _ => return Err(EvalError::Type(format!("cannot order {} and {}", a.kind(), b.kind()))),
    };
    let Some(ord) = ord else { return Ok(op == BinOp::Ne) };
    Ok(match op {
        BinOp::Eq => ord == Ordering::Equal,
        BinOp::Ne => ord != Ordering::Equal,
        BinOp::Lt => ord == Ordering::Less,
        BinOp::Le => ord != Ordering::Greater,
        BinOp::Gt => ord == Ordering::Greater,
        BinOp::Ge => ord != Ordering::Less,
        _ => unreachable!(),
    })
}

impl Env<'_> {
    fn eval(&self, e: &Expr, r: Option<&PValue>) -> Result<PValue, EvalError> {
        Ok(match e {
            Expr::Num(n) => PValue::Num(*n),
            Expr::Str(s) => PValue::Str(s.clone()),
            Expr::Bool(b) => PValue::Bool(*b),
            Expr::Null => PValue::Null,
            Expr::Data => self.data.clone(),
            Expr::Rec => r.cloned().ok_or(EvalError::UnboundRecord)?,
            Expr::Order(_) => return Err(EvalError::Type("asc/desc outside sort_by".into())),
            Expr::Field(base, name) => match self.eval(base, r)? {
                PValue::Rec(rec) => field(&rec, name)?,
                other => return Err(EvalError::Type(format!(".{name} on a {}", other.kind()))),
            },
            Expr::Index(base, idx) => {
                let b = self.eval(base, r)?;
                let i = self.eval(idx, r)?;
                match (b, i) {
                    (PValue::List(xs), PValue::Num(n)) if n.fract() == 0.0 => {
                        let n = n as i64;
                        let at = if n < 0 { xs.len() as i64 + n } else { n };
                        if at < 0 || at >= xs.len() as i64 {
                            return Err(EvalError::Index(n));
                        }
                        xs[at as usize].clone()
                    }
                    (PValue::Rec(rec), PValue::Str(k)) => field(&rec, &k)?,
                    (b, i) => return Err(EvalError::Type(format!("cannot index {} with {}", b.kind(), i.kind()))),
                }
            }
            Expr::Neg(inner) => PValue::Num(-as_num(&self.eval(inner, r)?, self.units)?),
            Expr::Not(inner) => PValue::Bool(!as_bool(&self.eval(inner, r)?)?),
            Expr::Bin(op, a, b) => {
                match op {
                    BinOp::And => {
                        return Ok(PValue::Bool(as_bool(&self.eval(a, r)?)? && as_bool(&self.eval(b, r)?)?))
                    }
                    BinOp::Or => {
                        return Ok(PValue::Bool(as_bool(&self.eval(a, r)?)? || as_bool(&self.eval(b, r)?)?))
                    }
                    _ => {}
                }
                let (x, y) = (self.eval(a, r)?, self.eval(b, r)?);
                match op {
                    BinOp::Add => match (&x, &y) {
                        (PValue::Str(s), PValue::Str(t)) => PValue::Str(format!("{s}{t}")),
                        _ => PValue::Num(as_num(&x, self.units)? + as_num(&y, self.units)?),
                    },
                    BinOp::Sub => PValue::Num(as_num(&x, self.units)? - as_num(&y, self.units)?),
                    BinOp::Mul => PValue::Num(as_num(&x, self.units)? * as_num(&y, self.units)?),
                    BinOp::Div => {
                        let d = as_num(&y, self.units)?;
                        if d == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        PValue::Num(as_num(&x, self.units)? / d)
                    }
                    _ => PValue::Bool(compare_values(*op, &x, &y, self.units)?),
                }
            }
            Expr::Call(f, args) => self.call(*f, args, r)?,
        })
    }

    fn numbers(&self, v: PValue, what: &str) -> Result<Vec<f64>, EvalError> {
        as_list(v, what)?.iter().map(|x| as_num(x, self.units)).collect()
    }

    fn call(&self, f: Func, args: &[Expr], r: Option<&PValue>) -> Result<PValue, EvalError> {
        let arg = |i: usize| self.eval(&args[i], r);
        Ok(match f {
            Func::SortBy => {
                let xs = as_list(arg(0)?, "sort_by")?;
                let ascending = match args.get(2) {
                    None => true,
                    Some(Expr::Order(asc)) => *asc,
                    Some(_) => return Err(EvalError::Type("sort_by order must be asc or desc".into())),
                };
                let mut keyed = xs
                    .into_iter()
                    .map(|x| Ok((self.eval(&args[1], Some(&x))?, x)))
                    .collect::<Result<Vec<_>, EvalError>>()?;
                for k in &keyed {
                    key_cmp(&k.0, &k.0)?;
                }
                // stable; keys already validated so comparison cannot fail
                keyed.sort_by(|a, b| {
                    let o = key_cmp(&a.0, &b.0).unwrap_or(Ordering::Equal);
                    if ascending {
                        o
                    } else {
                        o.reverse()
                    }
                });
                PValue::List(keyed.into_iter().map(|(_, x)| x).collect())
            }
            Func::Top => {
                let xs = as_list(arg(0)?, "top")?;
                let n = as_num(&arg(1)?, self.units)?;
                if n < 0.0 || n.fract() != 0.0 {
                    return Err(EvalError::Type(format!("top needs a non-negative integer, got {n}")));
                }
                PValue::List(xs.into_iter().take(n as usize).collect())
            }
            Func::Filter => {
                let mut out = Vec::new();
                for x in as_list(arg(0)?, "filter")? {
                    if as_bool(&self.eval(&args[1], Some(&x))?)? {
                        out.push(x);
                    }
                }
                PValue::List(out)
            }
            Func::Map => PValue::List(
                as_list(arg(0)?, "map")?
                    .iter()
                    .map(|x| self.eval(&args[1], Some(x)))
                    .collect::<Result<_, _>>()?,
            ),
            Func::Sum => PValue::Num(self.numbers(arg(0)?, "sum")?.iter().sum()),
            Func::Avg => {
                let xs = self.numbers(arg(0)?, "avg")?;
                if xs.is_empty() {
                    return Err(EvalError::Empty("avg"));
                }
                PValue::Num(xs.iter().sum::<f64>() / xs.len() as f64)
            }
            Func::Min | Func::Max => {
                let name = if f == Func::Min { "min" } else { "max" };
                let xs = self.numbers(arg(0)?, name)?;
                let pick = if f == Func::Min { f64::min } else { f64::max };
                PValue::Num(xs.into_iter().reduce(pick).ok_or(EvalError::Empty(name))?)
            }
            Func::Len => match arg(0)? {
                PValue::List(xs) => PValue::Num(xs.len() as f64),
                PValue::Str(s) => PValue::Num(s.chars().count() as f64),
                other => return Err(EvalError::Type(format!("len of a {}", other.kind()))),
            },
            Func::Round => {
                let x = as_num(&arg(0)?, self.units)?;
                let digits = match args.get(1) {
                    Some(_) => as_num(&arg(1)?, self.units)?,
                    None => 0.0,
                };
                if digits.fract() != 0.0 || !(0.0..=15.0).contains(&digits) {
                    return Err(EvalError::Type(format!("round digits must be 0..=15, got {digits}")));
                }
                let scale = 10f64.powi(digits as i32);
                PValue::Num((x * scale).round() / scale)
            }
            Func::Num => PValue::Num(as_num(&arg(0)?, self.units)?),
            Func::Date => match arg(0)? {
                PValue::Str(s) => PValue::Str(normalize_date(&s)?),
                other => return Err(EvalError::Type(format!("date of a {}", other.kind()))),
            },
            Func::JoinStr => {
                let xs = as_list(arg(0)?, "join_str")?;
                let sep = match arg(1)? {
                    PValue::Str(s) => s,
                    other => return Err(EvalError::Type(format!("join_str separator is a {}", other.kind()))),
                };
                PValue::Str(xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(&sep))
            }
        })
    }
}

fn mentions_data(e: &Expr) -> bool {
    match e {
        Expr::Data => true,
        Expr::Field(b, _) | Expr::Neg(b) | Expr::Not(b) => mentions_data(b),
        Expr::Index(a, b) | Expr::Bin(_, a, b) => mentions_data(a) || mentions_data(b),
        Expr::Call(_, args) => args.iter().any(mentions_data),
        _ => false,
    }
}

impl ResultTemplate {
    /// Render against `data`; any failure, or empty data referenced by an expression, gives
    /// [`NO_DATA`].
    pub fn eval(&self, data: &EntitySet) -> String {
        self.eval_with(data, &UnitTable::default())
    }

    pub fn eval_with(&self, data: &EntitySet, units: &UnitTable) -> String {
        self.try_eval(data, units).unwrap_or_else(|e| {
            log::debug!("template evaluation failed: {e}");
            NO_DATA.to_string()
        })
    }

    pub fn try_eval(&self, data: &EntitySet, units: &UnitTable) -> Result<String, EvalError> {
        let list = PValue::List(data.records.iter().cloned().map(PValue::Rec).collect());
        let env = Env { data: &list, units };
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Expr(e) => {
                    if data.records.is_empty() && mentions_data(e) {
                        return Err(EvalError::Empty("Data"));
                    }
                    out.push_str(&env.eval(e, None)?.to_string());
                }
            }
        }
        Ok(out)
    }
}

/// Parse and evaluate; parse errors also give [`NO_DATA`].
pub fn eval_template(template: &str, data: &EntitySet) -> String {
    match parse_template(template) {
        Ok(t) => t.eval(data),
        Err(e) => {
            log::debug!("{e}");
            NO_DATA.to_string()
        }
    }
}
