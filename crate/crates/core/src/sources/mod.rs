//! GET implementations for each kind of source.

pub mod docs;
pub mod kg;
pub mod relational;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catalog::{ColumnStats, TableStats};
use crate::chain::{Condition, GetNode, TABLE_SELECTOR};
use crate::gateway::{Gateway, GatewayError};
use crate::value::{CmpOp, Record, Value};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SourceError {
    #[error("no `table = \"...\"` selector in the condition")]
    NoTableSelector,
    #[error("more than one table selector in the condition")]
    MultipleTableSelectors,
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in {table}")]
    UnknownColumn { table: String, column: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("entity not found: {0}")]
    EntityNotFound(String),
    #[error("condition binds no search_key")]
    MissingSearchKey,
    #[error("document index is empty")]
    EmptyIndex,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("store error: {0}")]
    Store(String),
    #[error("data error: {0}")]
    Data(String),
}

/// Per-call context handed to adapters.
pub struct GetContext<'a> {
    pub gateway: &'a dyn Gateway,
    /// Natural-language query, used as context for model calls.
    pub query: &'a str,
}

/// Executes one GET. Implementations must be safe to call from several threads at once.
pub trait SourceAdapter: Send + Sync {
    /// Rows keyed by plain attribute names, one key per attribute in `node.all_attributes()`.
    fn get(&self, node: &GetNode, ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError>;
}

/// Separate the top-level `table = "..."` conjunct from the rest of the condition.
pub fn split_table_selector(condition: Option<&Condition>) -> Result<(String, Option<Condition>), SourceError> {
    let Some(cond) = condition else {
        return Err(SourceError::NoTableSelector);
    };
    let mut table = None;
    let mut rest = Vec::new();
    for c in cond.conjuncts() {
        match c {
            Condition::Cmp {
                attr,
                op: CmpOp::Eq,
                value,
            } if attr == TABLE_SELECTOR => {
                if table.is_some() {
                    return Err(SourceError::MultipleTableSelectors);
                }
                table = Some(value.to_plain_string());
            }
            other => rest.push(other.clone()),
        }
    }
    let table = table.ok_or(SourceError::NoTableSelector)?;
    let rest = if rest.is_empty() { None } else { Some(Condition::and(rest)) };
    Ok((table, rest))
}

/// Row count, distinct counts and numeric min/max for one table.
pub fn compute_table_stats(table: &str, columns: &[String], rows: &[Vec<Value>]) -> TableStats {
    let columns = columns
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut distinct = BTreeSet::new();
            let (mut lo, mut hi) = (None::<f64>, None::<f64>);
            for row in rows {
                match &row[i] {
                    Value::Null => {}
                    Value::Number(n) => {
                        lo = Some(lo.map_or(*n, |m| m.min(*n)));
                        hi = Some(hi.map_or(*n, |m| m.max(*n)));
                        distinct.insert(row[i].clone());
                    }
                    v => {
                        distinct.insert(v.clone());
                    }
                }
            }
            ColumnStats {
                column: name.clone(),
                min: lo,
                max: hi,
                distinct_count: if distinct.is_empty() { None } else { Some(distinct.len() as u64) },
            }
        })
        .collect();
    TableStats {
        table: table.to_string(),
        row_count: rows.len() as u64,
        columns,
    }
}

/// SELF: no retrieval, one row with every requested attribute null.
#[derive(Debug, Default)]
pub struct SelfAdapter;

impl SourceAdapter for SelfAdapter {
    fn get(&self, node: &GetNode, _ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        Ok(vec![node.all_attributes().into_iter().map(|a| (a, Value::Null)).collect()])
    }
}

/// Tables held as plain rows and filtered by direct condition evaluation.
#[derive(Debug, Default, Clone)]
pub struct MemoryAdapter {
    tables: BTreeMap<String, (Vec<String>, Vec<Vec<Value>>)>,
}

impl MemoryAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, name: &str, columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<TableStats, SourceError> {
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(SourceError::Data(format!(
                "{name}: row has {} cells, header has {}",
                bad.len(),
                columns.len()
            )));
        }
        let stats = compute_table_stats(name, &columns, &rows);
        self.tables.insert(name.to_string(), (columns, rows));
        Ok(stats)
    }

    pub fn table_stats(&self) -> Vec<TableStats> {
        self.tables
            .iter()
            .map(|(name, (cols, rows))| compute_table_stats(name, cols, rows))
            .collect()
    }
}

impl SourceAdapter for MemoryAdapter {
    fn get(&self, node: &GetNode, _ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        let (table, rest) = split_table_selector(node.condition.as_ref())?;
        let (columns, rows) = self.tables.get(&table).ok_or_else(|| SourceError::UnknownTable(table.clone()))?;
        let index: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let attrs = node.all_attributes();
        let referenced = rest.iter().flat_map(|c| c.attributes()).map(str::to_string);
        for a in attrs.iter().cloned().chain(referenced) {
            if !index.contains_key(a.as_str()) {
                return Err(SourceError::UnknownColumn { table, column: a });
            }
        }
        let mut out = Vec::new();
        for row in rows {
            let lookup = |a: &str| index.get(a).map(|&i| row[i].clone()).unwrap_or(Value::Null);
            if rest.as_ref().is_none_or(|c| c.eval(&lookup) == Some(true)) {
                out.push(attrs.iter().map(|a| (a.clone(), lookup(a))).collect());
            }
        }
        Ok(out)
    }
}
