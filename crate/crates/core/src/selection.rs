//! Source selection: a heuristic ranker, training-set builders from execution logs, and the
//! fine-tuning losses.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, SourceKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("catalog has no sources")]
    EmptyCatalog,
    #[error("no log entry for source {label} on query {query:?}")]
    MissingLogEntry { query: String, label: String },
    #[error("top-2 labels for {0:?} name the same source")]
    SameTop2(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}

/// One answered query: which source was used, whether the answer was right and how long
/// retrieval took. `top2` carries the base model's two most likely sources when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLogEntry {
    pub query: String,
    pub source: String,
    pub correct: bool,
    pub retrieval_time_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top2: Option<[String; 2]>,
}

impl ExecutionLogEntry {
    pub fn new(query: &str, source: &str, correct: bool, retrieval_time_ms: f64) -> Self {
        ExecutionLogEntry {
            query: query.to_string(),
            source: source.to_string(),
            correct,
            retrieval_time_ms,
            top2: None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.retrieval_time_ms >= 0.0 && self.retrieval_time_ms.is_finite()) {
            return Err(format!("retrieval_time_ms must be a non-negative number, got {}", self.retrieval_time_ms));
        }
        if self.source == "SELF" && self.retrieval_time_ms != 0.0 {
            return Err("SELF entries must have retrieval_time_ms 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub query: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub query: String,
    pub winner: String,
    pub loser: String,
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sources ranked by shared tokens between query and schema summary, then lower latency, then
/// name. SELF sources go last unless no source shares a token, in which case they go first.
pub fn heuristic_select(query: &str, catalog: &Catalog) -> Result<Vec<String>, SelectionError> {
    if catalog.is_empty() {
        return Err(SelectionError::EmptyCatalog);
    }
    let q = tokens(query);
    let mut scored: Vec<(usize, f64, &str, bool)> = catalog
        .sources()
        .map(|s| {
            let overlap = tokens(&s.schema_summary).intersection(&q).count();
            (overlap, s.typical_latency_ms, s.name.as_str(), s.kind == SourceKind::SelfKnowledge)
        })
        .collect();
    let any_overlap = scored.iter().any(|s| s.0 > 0);
    scored.sort_by(|a, b| {
        let self_rank = |x: &(usize, f64, &str, bool)| if any_overlap { x.3 } else { !x.3 };
        self_rank(a)
            .cmp(&self_rank(b))
            .then(b.0.cmp(&a.0))
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(b.2))
    });
    Ok(scored.into_iter().map(|s| s.2.to_string()).collect())
}

/// One `(query, source)` example per correct log entry, in log order.
pub fn build_sft_set(log: &[ExecutionLogEntry]) -> Vec<SftExample> {
    log.iter()
        .filter(|e| e.correct)
        .map(|e| SftExample {
            query: e.query.clone(),
            source: e.source.clone(),
        })
        .collect()
}

/// `(query, S1, S2)` rows from the log's `top2` column, first annotation per query.
pub fn top2_from_log(log: &[ExecutionLogEntry]) -> Vec<(String, String, String)> {
    let mut seen = BTreeSet::new();
    log.iter()
        .filter_map(|e| {
            let [s1, s2] = e.top2.as_ref()?;
            seen.insert(e.query.clone())
                .then(|| (e.query.clone(), s1.clone(), s2.clone()))
        })
        .collect()
}

/// Preference pairs from the base model's top-2 sources and the log.
///
/// If S1 is correct and no correct source was faster, S1 beats S2. Otherwise the fastest
/// correct source beats S1. Queries with no correct source give no pair.
pub fn build_dpo_pairs(
    top2: &[(String, String, String)],
    log: &[ExecutionLogEntry],
) -> Result<Vec<PreferencePair>, SelectionError> {
    let mut by_query: HashMap<&str, Vec<&ExecutionLogEntry>> = HashMap::new();
    for e in log {
        by_query.entry(e.query.as_str()).or_default().push(e);
    }
    let mut out = Vec::new();
    for (query, s1, s2) in top2 {
        if s1 == s2 {
            return Err(SelectionError::SameTop2(query.clone()));
        }
        let entries = by_query.get(query.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let find = |s: &str| {
            entries
                .iter()
                .find(|e| e.source == s)
                .copied()
                .ok_or_else(|| SelectionError::MissingLogEntry {
                    query: query.clone(),
                    label: s.to_string(),
                })
        };
        let e1 = find(s1)?;
        find(s2)?;
        // fastest correct source; first in log order on ties
        let Some(fastest) = entries
            .iter()
            .filter(|e| e.correct)
            .fold(None::<&&ExecutionLogEntry>, |best, e| match best {
                Some(b) if b.retrieval_time_ms <= e.retrieval_time_ms => Some(b),
                _ => Some(e),
            })
        else {
            continue;
        };
        let pair = if e1.correct && e1.retrieval_time_ms <= fastest.retrieval_time_ms {
            (s1.clone(), s2.clone())
        } else {
            (fastest.source.clone(), s1.clone())
        };
        out.push(PreferencePair {
            query: query.clone(),
            winner: pair.0,
            loser: pair.1,
        });
    }
    Ok(out)
}

fn check_prob(p: f64, zero_ok: bool) -> Result<(), SelectionError> {
    let ok = p.is_finite() && p <= 1.0 && if zero_ok { p >= 0.0 } else { p > 0.0 };
    if ok {
        Ok(())
    } else {
        Err(SelectionError::Domain(format!("probability {p} outside {}", if zero_ok { "[0, 1]" } else { "(0, 1]" })))
    }
}

/// `-mean(p)`: the supervised objective over the probabilities of the labelled sources.
pub fn sft_loss(probabilities: &[f64]) -> Result<f64, SelectionError> {
    if probabilities.is_empty() {
        return Err(SelectionError::Domain("empty batch".into()));
    }
    for &p in probabilities {
        check_prob(p, true)?;
    }
    Ok(-probabilities.iter().sum::<f64>() / probabilities.len() as f64)
}

/// `-mean(ln p)`, the negative log-likelihood variant.
pub fn sft_loss_log(probabilities: &[f64]) -> Result<f64, SelectionError> {
    if probabilities.is_empty() {
        return Err(SelectionError::Domain("empty batch".into()));
    }
    for &p in probabilities {
        check_prob(p, false)?;
    }
    Ok(-probabilities.iter().map(|p| p.ln()).sum::<f64>() / probabilities.len() as f64)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `-ln sigmoid(beta * (ln(pw_theta / pw_base) - ln(pl_theta / pl_base)))`.
pub fn dpo_loss(pw_theta: f64, pw_base: f64, pl_theta: f64, pl_base: f64, beta: f64) -> Result<f64, SelectionError> {
    for p in [pw_theta, pw_base, pl_theta, pl_base] {
        check_prob(p, false)?;
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SelectionError::Domain(format!("beta must be positive, got {beta}")));
    }
    let z = beta * ((pw_theta.ln() - pw_base.ln()) - (pl_theta.ln() - pl_base.ln()));
    Ok(softplus(-z))
}

/// Parse JSON lines; blank lines are skipped.
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>, SelectionError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| SelectionError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SelectionError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Read and validate an execution log.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<ExecutionLogEntry>, SelectionError> {
    let entries: Vec<ExecutionLogEntry> = read_jsonl(reader)?;
    for (i, e) in entries.iter().enumerate() {
        e.validate()
            .map_err(|message| SelectionError::Malformed { line: i + 1, message })?;
    }
    Ok(entries)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<(), SelectionError> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| SelectionError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| SelectionError::Io(e.to_string()))?;
    }
    Ok(())
}
