use std::collections::BTreeSet;

use super::lexer::{tokenize, Spanned, Tok};
use super::{auto_alias, ApiChain, ChainError, Condition, GetNode, JoinEdge, MAX_NESTING};
use crate::value::Value;

const KEYWORDS: &[&str] = &["GET", "JOIN", "AND", "OR", "NOT", "AS", "null"];

pub(crate) fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word) || word == "LIKE"
}

/// Parse and validate a chain.
pub fn parse_chain(text: &str) -> Result<ApiChain, ChainError> {
    if text.trim().is_empty() {
        return Err(ChainError::Syntax {
            position: 0,
            expected: "`GET`".into(),
        });
    }
    let mut p = Parser::new(text)?;
    let mut chain = p.chain()?;
    chain.validate()?;
    Ok(chain)
}

/// Parse raw bytes; invalid UTF-8 is a syntax error at the first bad byte.
pub fn parse_chain_bytes(bytes: &[u8]) -> Result<ApiChain, ChainError> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_chain(text),
        Err(e) => Err(ChainError::Syntax {
            position: e.valid_up_to(),
            expected: "UTF-8 text".into(),
        }),
    }
}

/// Parse a standalone condition expression.
pub fn parse_condition(text: &str) -> Result<Condition, ChainError> {
    let mut p = Parser::new(text)?;
    let cond = p.or_expr()?;
    p.expect_eof()?;
    Ok(cond)
}

struct Parser {
    toks: Vec<Spanned>,
    at: usize,
    depth: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ChainError> {
        Ok(Parser {
            toks: tokenize(text)?,
            at: 0,
            depth: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let i = (self.at + ahead).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].tok.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ChainError> {
        Err(ChainError::Syntax {
            position: self.pos(),
            expected: format!("{expected}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ChainError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.fail(what)
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ChainError> {
        if matches!(self.peek(), Tok::Ident(w) if w == kw) {
            self.bump();
            Ok(())
        } else {
            self.fail(&format!("`{kw}`"))
        }
    }

    fn is_keyword_tok(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn expect_eof(&mut self) -> Result<(), ChainError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.fail("end of input")
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ChainError> {
        match self.peek() {
            Tok::Ident(w) if !is_keyword(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.fail(what),
        }
    }

    fn chain(&mut self) -> Result<ApiChain, ChainError> {
        let mut nodes = vec![self.get(0)?];
        let mut edges = Vec::new();
        while *self.peek() == Tok::Dot {
            self.bump();
            self.expect_keyword("JOIN")?;
            self.expect(Tok::LParen, "`(`")?;
            edges.push(self.join_spec()?);
            self.expect(Tok::RParen, "`)`")?;
            self.expect(Tok::Dot, "`.`")?;
            nodes.push(self.get(nodes.len())?);
        }
        self.expect_eof()?;
        Ok(ApiChain { nodes, edges })
    }

    fn get(&mut self, index: usize) -> Result<GetNode, ChainError> {
        self.expect_keyword("GET")?;
        self.expect(Tok::LParen, "`(`")?;
        let source = self.ident("source name")?;
        self.expect(Tok::Comma, "`,`")?;
        let condition = if *self.peek() == Tok::Comma {
            None
        } else {
            Some(self.or_expr()?)
        };
        self.expect(Tok::Comma, "`,`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut attributes = BTreeSet::new();
        attributes.insert(self.ident("attribute name")?);
        while *self.peek() == Tok::Comma {
            self.bump();
            attributes.insert(self.ident("attribute name")?);
        }
        self.expect(Tok::RBrace, "`}`")?;
        self.expect(Tok::RParen, "`)`")?;
        let alias = if self.is_keyword_tok("AS") {
            self.bump();
            self.ident("alias")?
        } else {
            auto_alias(index)
        };
        Ok(GetNode {
            alias,
            source,
            condition,
            attributes,
            internal: BTreeSet::new(),
        })
    }

    fn join_spec(&mut self) -> Result<JoinEdge, ChainError> {
        let qualified = matches!(self.peek(), Tok::Ident(w) if w == "left") && *self.peek_at(1) == Tok::Dot;
        if qualified {
            self.bump();
            self.bump();
            let left_attr = self.ident("attribute name")?;
            let op = match self.peek() {
                Tok::Op(op) => *op,
                _ => return self.fail("comparison operator"),
            };
            self.bump();
            if !(matches!(self.peek(), Tok::Ident(w) if w == "right") && *self.peek_at(1) == Tok::Dot) {
                return self.fail("`right.`");
            }
            self.bump();
            self.bump();
            let right_attr = self.ident("attribute name")?;
            Ok(JoinEdge::Relational {
                left_attr,
                op,
                right_attr,
            })
        } else {
            let left_attr = self.ident("attribute name or `left.`")?;
            self.expect(Tok::Comma, "`,`")?;
            let relation = self.ident("relation name")?;
            self.expect(Tok::Comma, "`,`")?;
            let right_attr = self.ident("attribute name")?;
            Ok(JoinEdge::SemanticTriple {
                left_attr,
                relation,
                right_attr,
            })
        }
    }

    fn enter(&mut self) -> Result<(), ChainError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.fail("shallower nesting");
        }
        Ok(())
    }

    pub(crate) fn or_expr(&mut self) -> Result<Condition, ChainError> {
        let mut items = vec![self.and_expr()?];
        while self.is_keyword_tok("OR") {
            self.bump();
            items.push(self.and_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::Or(items)
        })
    }

    fn and_expr(&mut self) -> Result<Condition, ChainError> {
        let mut items = vec![self.not_expr()?];
        while self.is_keyword_tok("AND") {
            self.bump();
            items.push(self.not_expr()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Condition::And(items)
        })
    }

    fn not_expr(&mut self) -> Result<Condition, ChainError> {
        if self.is_keyword_tok("NOT") {
            self.bump();
            self.enter()?;
            let inner = self.not_expr()?;
            self.depth -= 1;
            return Ok(Condition::Not(Box::new(inner)));
        }
        if *self.peek() == Tok::LParen {
            self.bump();
            self.enter()?;
            let inner = self.or_expr()?;
            self.depth -= 1;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        let attr = self.ident("attribute name, `NOT` or `(`")?;
        let op = match self.peek() {
            Tok::Op(op) => *op,
            _ => return self.fail("comparison operator"),
        };
        self.bump();
        let value = match self.peek().clone() {
            Tok::Str(s) => Value::Text(s),
            Tok::Num(n) => Value::Number(n),
            Tok::Ident(w) if w == "null" => Value::Null,
            _ => return self.fail("literal"),
        };
        self.bump();
        Ok(Condition::Cmp { attr, op, value })
    }
}
