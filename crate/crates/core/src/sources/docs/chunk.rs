//! Parent-child chunking over whitespace tokens.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSizes {
    pub parent: usize,
    pub child: usize,
    pub overlap: usize,
}

impl Default for ChunkSizes {
    fn default() -> Self {
        ChunkSizes {
            parent: 1024,
            child: 256,
            overlap: 32,
        }
    }
}

/// Token range `[start, end)` of a chunk and its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParentPiece {
    pub piece: Piece,
    /// Token ranges are relative to the parent.
    pub children: Vec<Piece>,
}

/// Byte spans of whitespace-separated tokens.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

fn ends_sentence(token: &str) -> bool {
    let t = token.trim_end_matches(['"', '\'', ')', ']', '\u{201d}', '\u{2019}']);
    t.ends_with(['.', '!', '?'])
}

/// End of the next window from `start`: the whole rest if it fits, else the last sentence end in
/// the latter half of the window, else the full window.
fn cut(tokens: &[&str], start: usize, size: usize) -> usize {
    let n = tokens.len();
    if n - start <= size {
        return n;
    }
    let hard = start + size;
    (start + size / 2 + 1..=hard)
        .rev()
        .find(|&end| ends_sentence(tokens[end - 1]))
        .unwrap_or(hard)
}

fn slice(text: &str, spans: &[(usize, usize)], start: usize, end: usize) -> String {
    text[spans[start].0..spans[end - 1].1].to_string()
}

/// Split `text` into parents and overlapping children. Empty text gives no parents.
pub fn chunk_text(text: &str, sizes: ChunkSizes) -> Vec<ParentPiece> {
    assert!(sizes.child > sizes.overlap * 2 && sizes.parent >= sizes.child, "bad chunk sizes");
    let spans = token_spans(text);
    let tokens: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
    let mut parents = Vec::new();
    let mut p_start = 0;
    while p_start < tokens.len() {
        let p_end = cut(&tokens, p_start, sizes.parent);
        let local = &tokens[p_start..p_end];
        let local_spans = &spans[p_start..p_end];
        let mut children = Vec::new();
        let mut c_start = 0;
        loop {
            let c_end = cut(local, c_start, sizes.child);
            children.push(Piece {
                start: c_start,
                end: c_end,
                text: slice(text, local_spans, c_start, c_end),
            });
            if c_end == local.len() {
                break;
            }
            c_start = c_end - sizes.overlap;
        }
        parents.push(ParentPiece {
            piece: Piece {
                start: p_start,
                end: p_end,
                text: slice(text, &spans, p_start, p_end),
            },
            children,
        });
        p_start = p_end;
    }
    parents
}
