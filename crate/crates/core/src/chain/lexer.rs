use super::ChainError;
use crate::value::CmpOp;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    Op(CmpOp),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Dot,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Num(_) => "number".into(),
            Tok::Op(op) => format!("`{op}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub pos: usize,
}

fn err(position: usize, expected: &str) -> ChainError {
    ChainError::Syntax {
        position,
        expected: expected.to_string(),
    }
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Spanned>, ChainError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '{' => {
                i += 1;
                Tok::LBrace
            }
            '}' => {
                i += 1;
                Tok::RBrace
            }
            ',' => {
                i += 1;
                Tok::Comma
            }
            '.' => {
                i += 1;
                Tok::Dot
            }
            '~' => {
                i += 1;
                Tok::Op(CmpOp::Fuzzy)
            }
            '=' => {
                i += 1;
                Tok::Op(CmpOp::Eq)
            }
            '!' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Op(CmpOp::Ne)
                } else {
                    return Err(err(i + 1, "`=` after `!`"));
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Op(CmpOp::Le)
                } else {
                    i += 1;
                    Tok::Op(CmpOp::Lt)
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Op(CmpOp::Ge)
                } else {
                    i += 1;
                    Tok::Op(CmpOp::Gt)
                }
            }
            '"' => {
                let (s, next) = lex_string(src, i)?;
                i = next;
                Tok::Str(s)
            }
            '-' | '0'..='9' => {
                let (n, next) = lex_number(bytes, i)?;
                i = next;
                Tok::Num(n)
            }
            c if is_ident_start(c) => {
                while i < bytes.len() && is_ident_continue(bytes[i] as char) {
                    i += 1;
                }
                let word = &src[start..i];
                if word == "LIKE" {
                    Tok::Op(CmpOp::Like)
                } else {
                    Tok::Ident(word.to_string())
                }
            }
            _ => return Err(err(i, "a token")),
        };
        out.push(Spanned { tok, pos: start });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        pos: bytes.len(),
    });
    Ok(out)
}

fn lex_string(src: &str, open: usize) -> Result<(String, usize), ChainError> {
    let mut out = String::new();
    let mut chars = src[open + 1..].char_indices();
    while let Some((off, c)) = chars.next() {
        let at = open + 1 + off;
        match c {
            '"' => return Ok((out, at + 1)),
            '\\' => {
                let (_, esc) = chars.next().ok_or_else(|| err(at + 1, "escape character"))?;
                match esc {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    'u' => {
                        let mut code = String::new();
                        match chars.next() {
                            Some((_, '{')) => {}
                            _ => return Err(err(at + 2, "`{` after \\u")),
                        }
                        loop {
                            match chars.next() {
                                Some((_, '}')) => break,
                                Some((_, h)) if h.is_ascii_hexdigit() && code.len() < 6 => code.push(h),
                                _ => return Err(err(at, "hex digits and `}` in \\u{...}")),
                            }
                        }
                        let ch = u32::from_str_radix(&code, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| err(at, "a valid unicode scalar"))?;
                        out.push(ch);
                    }
                    _ => return Err(err(at + 1, "one of \\\" \\\\ \\n \\t \\r \\u{..}")),
                }
            }
            c => out.push(c),
        }
    }
    Err(err(src.len(), "closing `\"`"))
}

fn lex_number(bytes: &[u8], start: usize) -> Result<(f64, usize), ChainError> {
    let mut i = start;
    if bytes[i] == b'-' {
        i += 1;
    }
    let digits = |i: &mut usize| {
        let s = *i;
        while *i < bytes.len() && bytes[*i].is_ascii_digit() {
            *i += 1;
        }
        *i > s
    };
    if !digits(&mut i) {
        return Err(err(i, "digit"));
    }
    if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
        i += 1;
        digits(&mut i);
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if digits(&mut j) {
            i = j;
        }
    }
    // ASCII-only slice, always valid UTF-8
    let text = std::str::from_utf8(&bytes[start..i]).unwrap();
    let n: f64 = text.parse().map_err(|_| err(start, "number"))?;
    if !n.is_finite() {
        return Err(err(start, "finite number"));
    }
    Ok((n, i))
}
