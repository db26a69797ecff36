//! Registry of sources with their schemas and the statistics used for cardinality estimation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceKind {
    Relational,
    KnowledgeGraph,
    Documents,
    /// The model's own knowledge; no retrieval.
    #[serde(rename = "Self")]
    SelfKnowledge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub column: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub distinct_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    pub table: String,
    pub row_count: u64,
    pub columns: Vec<ColumnStats>,
}

impl TableStats {
    pub fn column(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.column == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub name: String,
    pub kind: SourceKind,
    /// Short description used in prompts.
    pub schema_summary: String,
    #[serde(default)]
    pub tables: Vec<TableStats>,
    #[serde(default)]
    pub typical_latency_ms: f64,
}

impl SourceDescriptor {
    pub fn new(name: impl Into<String>, kind: SourceKind, schema_summary: impl Into<String>) -> Self {
        SourceDescriptor {
            name: name.into(),
            kind,
            schema_summary: schema_summary.into(),
            tables: Vec::new(),
            typical_latency_ms: 0.0,
        }
    }

    pub fn with_latency(mut self, ms: f64) -> Self {
        self.typical_latency_ms = ms;
        self
    }

    pub fn with_tables(mut self, tables: Vec<TableStats>) -> Self {
        self.tables = tables;
        self
    }

    pub fn table(&self, name: &str) -> Option<&TableStats> {
        self.tables.iter().find(|t| t.table == name)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("source {0} is already registered")]
    DuplicateSource(String),
    #[error("unknown source {0}")]
    UnknownSource(String),
    #[error("source {0} is not relational")]
    NotRelational(String),
    #[error("invalid descriptor for {name}: {reason}")]
    InvalidDescriptor { name: String, reason: String },
}

/// Sources by name. Populated once, then read concurrently.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Catalog {
    sources: BTreeMap<String, SourceDescriptor>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_source(&mut self, desc: SourceDescriptor) -> Result<(), CatalogError> {
        let invalid = |reason: &str| CatalogError::InvalidDescriptor {
            name: desc.name.clone(),
            reason: reason.to_string(),
        };
        if desc.name.is_empty() {
            return Err(invalid("empty name"));
        }
        if desc.kind == SourceKind::SelfKnowledge && !desc.tables.is_empty() {
            return Err(invalid("SELF has no tables"));
        }
        if !(desc.typical_latency_ms >= 0.0) {
            return Err(invalid("negative latency"));
        }
        for t in &desc.tables {
            for c in &t.columns {
                if let (Some(lo), Some(hi)) = (c.min, c.max) {
                    if lo > hi {
                        return Err(invalid(&format!("{}.{} has min > max", t.table, c.column)));
                    }
                }
                if c.distinct_count.is_some_and(|d| d == 0 || d > t.row_count) {
                    return Err(invalid(&format!("{}.{} distinct_count out of range", t.table, c.column)));
                }
            }
        }
        if self.sources.contains_key(&desc.name) {
            return Err(CatalogError::DuplicateSource(desc.name));
        }
        self.sources.insert(desc.name.clone(), desc);
        Ok(())
    }

    pub fn source(&self, name: &str) -> Result<&SourceDescriptor, CatalogError> {
        self.sources
            .get(name)
            .ok_or_else(|| CatalogError::UnknownSource(name.to_string()))
    }

    pub fn sources(&self) -> impl Iterator<Item = &SourceDescriptor> {
        self.sources.values()
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Column statistics, or `None` when the table or column has none recorded.
    pub fn column_stats(&self, source: &str, table: &str, column: &str) -> Result<Option<&ColumnStats>, CatalogError> {
        let desc = self.source(source)?;
        if desc.kind != SourceKind::Relational {
            return Err(CatalogError::NotRelational(source.to_string()));
        }
        Ok(desc.table(table).and_then(|t| t.column(column)))
    }

    pub fn table_stats(&self, source: &str, table: &str) -> Result<Option<&TableStats>, CatalogError> {
        let desc = self.source(source)?;
        if desc.kind != SourceKind::Relational {
            return Err(CatalogError::NotRelational(source.to_string()));
        }
        Ok(desc.table(table))
    }
}

/// One entry of the catalog config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub name: String,
    pub kind: SourceKind,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default)]
    pub schema_summary: String,
    #[serde(default)]
    pub data_path: Option<String>,
}

/// Catalog config: either a bare array of sources or an object with `sources` and an optional gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogConfig {
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub gateway: Option<crate::gateway::GatewayConfig>,
    /// Directory for ingested state; defaults to `.errag` next to the config file.
    #[serde(default)]
    pub state_dir: Option<String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
}

impl CatalogConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        let cfg = if raw.is_array() {
            CatalogConfig {
                sources: serde_json::from_value(raw).map_err(|e| ConfigError::Malformed(e.to_string()))?,
                gateway: None,
                state_dir: None,
            }
        } else {
            serde_json::from_value(raw).map_err(|e| ConfigError::Malformed(e.to_string()))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
