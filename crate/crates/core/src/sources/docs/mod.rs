//! Document source: text extraction, parent-child chunks and a BM25 index over the children.

pub mod bm25;
pub mod chunk;
pub mod html;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{is_reserved_attribute, GetNode, CHUNK, CONTENT, SEARCH_KEY};
use crate::embed::{cosine, Embedder};
use crate::value::{Record, Value};

use super::{GetContext, SourceAdapter, SourceError};

pub use bm25::{analyze, query_terms, Bm25Params};
pub use chunk::{chunk_text, ChunkSizes};
pub use html::html_to_text;

const MAGIC: &[u8; 5] = b"ERDX1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParentChunk {
    pub doc: String,
    /// Token offset within the document.
    pub offset: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildChunk {
    pub parent: usize,
    pub text: String,
    /// Number of analyzed terms.
    pub len: u32,
}

/// Children postings, one entry per `(child, tf)`, sorted by child.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChunkIndex {
    pub sizes: ChunkSizes,
    pub params: Bm25Params,
    pub parents: Vec<ParentChunk>,
    pub children: Vec<ChildChunk>,
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    pub total_len: u64,
}

/// A retrieved child with its parent's text.
#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub child: usize,
    pub score: f64,
    pub doc: String,
    pub chunk: String,
    pub parent: String,
}

/// Reorders the top-k hits, e.g. with a pairwise model.
pub trait Reranker: Send + Sync {
    fn rerank(&self, query: &str, hits: Vec<Hit>) -> Vec<Hit>;
}

#[derive(Default)]
pub struct RetrieveOptions<'a> {
    pub reranker: Option<&'a dyn Reranker>,
    /// When set, scores become `0.5 * sparse / max_sparse + 0.5 * cosine`.
    pub dense: Option<&'a dyn Embedder>,
}

impl ChunkIndex {
    pub fn new(sizes: ChunkSizes, params: Bm25Params) -> Self {
        ChunkIndex {
            sizes,
            params,
            ..Default::default()
        }
    }

    /// Chunk and index one document's text.
    pub fn add_document(&mut self, doc: &str, text: &str) {
        for p in chunk_text(text, self.sizes) {
            let parent = self.parents.len();
            self.parents.push(ParentChunk {
                doc: doc.to_string(),
                offset: p.piece.start,
                text: p.piece.text,
            });
            for c in p.children {
                let id = self.children.len() as u32;
                let terms = analyze(&c.text);
                let mut tf: BTreeMap<String, u32> = BTreeMap::new();
                for t in &terms {
                    *tf.entry(t.clone()).or_default() += 1;
                }
                for (t, n) in tf {
                    self.postings.entry(t).or_default().push((id, n));
                }
                self.total_len += terms.len() as u64;
                self.children.push(ChildChunk {
                    parent,
                    text: c.text,
                    len: terms.len() as u32,
                });
            }
        }
    }

    pub fn avg_len(&self) -> f64 {
        if self.children.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.children.len() as f64
        }
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// BM25 of one child for the given (deduplicated) terms.
    pub fn bm25_score(&self, terms: &[String], child: usize) -> f64 {
        let n = self.children.len();
        let avg = self.avg_len();
        let dl = self.children[child].len;
        terms
            .iter()
            .map(|t| {
                let Some(post) = self.postings.get(t) else { return 0.0 };
                match post.binary_search_by_key(&(child as u32), |p| p.0) {
                    Ok(i) => bm25::term_score(self.params, bm25::idf(n, post.len()), post[i].1, dl, avg),
                    Err(_) => 0.0,
                }
            })
            .sum()
    }

    /// Every child with a positive score.
    fn score_all(&self, terms: &[String]) -> BTreeMap<usize, f64> {
        let n = self.children.len();
        let avg = self.avg_len();
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for t in terms {
            let Some(post) = self.postings.get(t) else { continue };
            let idf = bm25::idf(n, post.len());
            for &(c, tf) in post {
                let s = bm25::term_score(self.params, idf, tf, self.children[c as usize].len, avg);
                *acc.entry(c as usize).or_default() += s;
            }
        }
        acc.retain(|_, s| *s > 0.0);
        acc
    }

    /// Top `k` children by score, ties broken by child id; the reranker reorders the result.
    pub fn retrieve_chunks(&self, query: &str, k: usize, opts: &RetrieveOptions<'_>) -> Result<Vec<Hit>, SourceError> {
        if self.children.is_empty() {
            return Err(SourceError::EmptyIndex);
        }
        let k = k.max(1);
        let terms = query_terms(query);
        let sparse = self.score_all(&terms);
        let mut scored: Vec<(usize, f64)> = match opts.dense {
            None => sparse.into_iter().collect(),
            Some(emb) => {
                let max = sparse.values().copied().fold(0.0, f64::max);
                let q = emb.embed(query);
                (0..self.children.len())
                    .map(|c| {
                        let s = sparse.get(&c).map_or(0.0, |s| s / max);
                        let d = f64::from(cosine(&q, &emb.embed(&self.children[c].text)));
                        (c, 0.5 * s + 0.5 * d)
                    })
                    .filter(|(_, s)| *s > 0.0)
                    .collect()
            }
        };
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        let hits = scored
            .into_iter()
            .map(|(c, score)| {
                let child = &self.children[c];
                let parent = &self.parents[child.parent];
                Hit {
                    child: c,
                    score,
                    doc: parent.doc.clone(),
                    chunk: child.text.clone(),
                    parent: parent.text.clone(),
                }
            })
            .collect();
        Ok(match opts.reranker {
            Some(r) => r.rerank(query, hits),
            None => hits,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), SourceError> {
        w.write_all(MAGIC).map_err(|e| SourceError::Store(e.to_string()))?;
        bincode::serialize_into(w, self).map_err(|e| SourceError::Store(e.to_string()))
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, SourceError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)
            .map_err(|e| SourceError::Store(format!("index header: {e}")))?;
        if &magic != MAGIC {
            return Err(SourceError::Store("not an ERDX1 index".into()));
        }
        bincode::deserialize_from(r).map_err(|e| SourceError::Store(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SourceError> {
        let f = std::fs::File::create(path).map_err(|e| SourceError::Store(format!("{}: {e}", path.display())))?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let f = std::fs::File::open(path).map_err(|e| SourceError::Store(format!("{}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// Index every `.html`, `.htm` and `.txt` file under `dir` (recursively, in path order).
    pub fn from_dir(dir: &Path, sizes: ChunkSizes, params: Bm25Params) -> Result<Self, SourceError> {
        let mut files = Vec::new();
        collect_files(dir, &mut files)?;
        files.sort();
        let mut idx = ChunkIndex::new(sizes, params);
        for f in files {
            let raw = std::fs::read_to_string(&f).map_err(|e| SourceError::Data(format!("{}: {e}", f.display())))?;
            let is_html = f.extension().is_some_and(|x| x == "html" || x == "htm");
            let text = if is_html { html_to_text(&raw) } else { raw };
            let name = f.strip_prefix(dir).unwrap_or(&f).to_string_lossy().into_owned();
            idx.add_document(&name, &text);
        }
        Ok(idx)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<(), SourceError> {
    let entries = std::fs::read_dir(dir).map_err(|e| SourceError::Data(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e.map_err(|e| SourceError::Data(e.to_string()))?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "html" || x == "htm" || x == "txt") {
            out.push(p);
        }
    }
    Ok(())
}

/// GET adapter over a [`ChunkIndex`].
pub struct DocsStore {
    pub index: ChunkIndex,
    pub k: usize,
    pub reranker: Option<Box<dyn Reranker>>,
    pub dense: Option<Box<dyn Embedder>>,
}

impl DocsStore {
    pub fn new(index: ChunkIndex) -> Self {
        DocsStore {
            index,
            k: 5,
            reranker: None,
            dense: None,
        }
    }

    fn options(&self) -> RetrieveOptions<'_> {
        RetrieveOptions {
            reranker: self.reranker.as_deref(),
            dense: self.dense.as_deref(),
        }
    }

    /// Retrieval query for a GET: condition literals, then non-reserved attribute names.
    pub fn retrieval_query(node: &GetNode) -> String {
        let mut parts: Vec<String> = node
            .condition
            .iter()
            .flat_map(|c| c.literals())
            .filter(|v| !v.is_null())
            .map(Value::to_plain_string)
            .collect();
        parts.extend(node.attributes.iter().filter(|a| !is_reserved_attribute(a)).cloned());
        parts.join(" ")
    }

    fn record(&self, node: &GetNode, hit: &Hit, key: Option<&str>, ctx: &GetContext<'_>) -> Result<Record, SourceError> {
        let mut rec = Record::new();
        for a in node.all_attributes() {
            let v = match a.as_str() {
                CHUNK => Value::Text(hit.chunk.clone()),
                CONTENT => Value::Text(hit.parent.clone()),
                SEARCH_KEY => key.map_or(Value::Null, |k| Value::Text(k.to_string())),
                _ => match ctx.gateway.extract_attribute(&hit.chunk, &a, ctx.query)? {
                    Some(v) => Value::Text(v),
                    None => Value::Null,
                },
            };
            rec.insert(a, v);
        }
        Ok(rec)
    }

    /// Top-k chunks for the query; when the condition binds search keys, the best chunk per key.
    pub fn docs_get(&self, node: &GetNode, ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        if self.index.children.is_empty() {
            return Err(SourceError::EmptyIndex);
        }
        let query = Self::retrieval_query(node);
        let opts = self.options();
        let mut out = Vec::new();
        match node.condition.as_ref().and_then(|c| c.search_keys()) {
            Some(keys) => {
                let base = GetNode {
                    condition: None,
                    ..node.clone()
                };
                let extra = Self::retrieval_query(&base);
                // other literals than the keys, shared by all keys
                let shared: Vec<String> = node
                    .condition
                    .iter()
                    .flat_map(|c| c.conjuncts())
                    .filter(|c| !c.attributes().contains(SEARCH_KEY))
                    .flat_map(|c| c.literals())
                    .filter(|v| !v.is_null())
                    .map(Value::to_plain_string)
                    .collect();
                for key in keys {
                    let q = [key.clone()]
                        .into_iter()
                        .chain(shared.iter().cloned())
                        .chain((!extra.is_empty()).then(|| extra.clone()))
                        .collect::<Vec<_>>()
                        .join(" ");
                    if let Some(hit) = self.index.retrieve_chunks(&q, 1, &opts)?.first() {
                        out.push(self.record(node, hit, Some(&key), ctx)?);
                    }
                }
            }
            None => {
                for hit in self.index.retrieve_chunks(&query, self.k, &opts)? {
                    out.push(self.record(node, &hit, None, ctx)?);
                }
            }
        }
        Ok(out)
    }
}

impl SourceAdapter for DocsStore {
    fn get(&self, node: &GetNode, ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        self.docs_get(node, ctx)
    }
}
