//! Config resolution, ingestion and reloading of persisted sources.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use errag_core::catalog::{CatalogConfig, SourceConfig};
use errag_core::executor::Adapters;
use errag_core::gateway::{self, Gateway, GatewayConfig};
use errag_core::sources::docs::{html_to_text, Bm25Params, ChunkIndex, ChunkSizes, DocsStore};
use errag_core::sources::kg::KgStore;
use errag_core::sources::relational::RelationalStore;
use errag_core::sources::SelfAdapter;
use errag_core::{Catalog, SourceDescriptor, SourceKind};
use serde_json::json;

use crate::error::{fail, CliResult, Context, Kind};

pub struct Workspace {
    pub config: CatalogConfig,
    pub base: PathBuf,
    pub state: PathBuf,
}

impl Workspace {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return fail(Kind::Config, "no config given; pass --config or set ERRAG_CONFIG");
        };
        let config = CatalogConfig::load(path).context(Kind::Config, "")?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let state = match &config.state_dir {
            Some(d) => base.join(d),
            None => base.join(".errag"),
        };
        Ok(Workspace { config, base, state })
    }

    fn resolve(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }

    fn state_file(&self, name: &str, ext: &str) -> PathBuf {
        self.state.join(format!("{name}.{ext}"))
    }

    pub fn gateway(&self) -> CliResult<Box<dyn Gateway>> {
        let mut cfg: GatewayConfig = self.config.gateway.clone().unwrap_or_default();
        if let Some(p) = &cfg.mock_path {
            cfg.mock_path = Some(self.resolve(p).display().to_string());
        }
        gateway::from_config(&cfg).context(Kind::Config, "gateway")
    }

    pub fn remote_gateway(&self) -> bool {
        self.config
            .gateway
            .as_ref()
            .is_some_and(|g| g.mode == gateway::GatewayMode::Remote)
    }

    /// Load every source, compute statistics, write the state directory.
    /// Returns one summary object per source.
    pub fn ingest(&self) -> CliResult<Vec<serde_json::Value>> {
        let mut catalog = Catalog::new();
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.config.sources {
            if !seen.insert(s.name.as_str()) {
                return fail(Kind::Config, format!("duplicate source name {}", s.name));
            }
        }
        std::fs::create_dir_all(&self.state).context(Kind::Data, &self.state.display().to_string())?;
        let mut summaries = Vec::new();
        for s in &self.config.sources {
            let (desc, summary) = self.ingest_source(s)?;
            catalog.register_source(desc).context(Kind::Config, "")?;
            summaries.push(summary);
        }
        let text = serde_json::to_string_pretty(&catalog).context(Kind::Data, "catalog")?;
        std::fs::write(self.state.join("catalog.json"), text).context(Kind::Data, "catalog")?;
        Ok(summaries)
    }

    fn data_path(&self, s: &SourceConfig) -> CliResult<PathBuf> {
        let Some(p) = &s.data_path else {
            return fail(Kind::Config, format!("source {} needs a data_path", s.name));
        };
        let p = self.resolve(p);
        if !p.exists() {
            return fail(Kind::Data, format!("source {}: {} does not exist", s.name, p.display()));
        }
        Ok(p)
    }

    fn ingest_source(&self, s: &SourceConfig) -> CliResult<(SourceDescriptor, serde_json::Value)> {
        let data_err = |what: &str| format!("source {}: {what}", s.name);
        let mut desc = SourceDescriptor::new(&s.name, s.kind, &s.schema_summary).with_latency(s.latency_ms);
        let summary = match s.kind {
            SourceKind::Relational => {
                let src = self.data_path(s)?;
                let db = self.state_file(&s.name, "sqlite");
                if db.exists() {
                    std::fs::remove_file(&db).context(Kind::Data, &data_err("stale database"))?;
                }
                let mut store = RelationalStore::open(&db).context(Kind::Data, &data_err("database"))?;
                let mut files = csv_files(&src).context(Kind::Data, &data_err("listing"))?;
                files.sort();
                for f in &files {
                    let table = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                    let file = std::fs::File::open(f).context(Kind::Data, &data_err(&f.display().to_string()))?;
                    store.add_csv(&table, file).context(Kind::Data, &data_err(&f.display().to_string()))?;
                }
                let tables = store.table_stats();
                if desc.schema_summary.is_empty() {
                    desc.schema_summary = tables
                        .iter()
                        .map(|t| {
                            let cols: Vec<&str> = t.columns.iter().map(|c| c.column.as_str()).collect();
                            format!("{}({})", t.table, cols.join(", "))
                        })
                        .collect::<Vec<_>>()
                        .join("; ");
                }
                let rows: u64 = tables.iter().map(|t| t.row_count).sum();
                let n = tables.len();
                desc = desc.with_tables(tables);
                json!({"source": s.name, "kind": "relational", "tables": n, "rows": rows})
            }
            SourceKind::KnowledgeGraph => {
                let kg = KgStore::load_path(&self.data_path(s)?).context(Kind::Data, &data_err("pages"))?;
                kg.save(&self.state_file(&s.name, "kg.json")).context(Kind::Data, &data_err("save"))?;
                if desc.schema_summary.is_empty() {
                    desc.schema_summary = "entity pages with infobox attributes".into();
                }
                json!({"source": s.name, "kind": "kg", "pages": kg.len()})
            }
            SourceKind::Documents => {
                let src = self.data_path(s)?;
                let index = if src.is_dir() {
                    ChunkIndex::from_dir(&src, ChunkSizes::default(), Bm25Params::default())
                        .context(Kind::Data, &data_err("documents"))?
                } else {
                    let raw = std::fs::read_to_string(&src).context(Kind::Data, &data_err(&src.display().to_string()))?;
                    let html = src.extension().is_some_and(|x| x == "html" || x == "htm");
                    let mut idx = ChunkIndex::new(ChunkSizes::default(), Bm25Params::default());
                    let name = src.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    idx.add_document(&name, &if html { html_to_text(&raw) } else { raw });
                    idx
                };
                index.save(&self.state_file(&s.name, "erdx")).context(Kind::Data, &data_err("save"))?;
                if desc.schema_summary.is_empty() {
                    desc.schema_summary = "text documents".into();
                }
                json!({
                    "source": s.name,
                    "kind": "docs",
                    "parents": index.parents.len(),
                    "chunks": index.children.len(),
                })
            }
            SourceKind::SelfKnowledge => json!({"source": s.name, "kind": "self"}),
        };
        Ok((desc, summary))
    }

    /// Catalog and adapters from a previous ingest.
    pub fn open(&self) -> CliResult<(Catalog, Adapters)> {
        let path = self.state.join("catalog.json");
        let text = std::fs::read_to_string(&path)
            .context(Kind::Data, &format!("{} (run `errag ingest` first)", path.display()))?;
        let catalog: Catalog = serde_json::from_str(&text).context(Kind::Data, "catalog")?;
        let mut adapters = Adapters::new();
        for s in catalog.sources() {
            let name = s.name.as_str();
            let err = format!("source {name}");
            match s.kind {
                SourceKind::Relational => {
                    let db = self.state_file(name, "sqlite");
                    if !db.exists() {
                        return fail(Kind::Data, format!("{err}: {} missing; re-run ingest", db.display()));
                    }
                    adapters.insert(name, Arc::new(RelationalStore::open(&db).context(Kind::Data, &err)?));
                }
                SourceKind::KnowledgeGraph => {
                    let kg = KgStore::load_path(&self.state_file(name, "kg.json")).context(Kind::Data, &err)?;
                    adapters.insert(name, Arc::new(kg));
                }
                SourceKind::Documents => {
                    let idx = ChunkIndex::load(&self.state_file(name, "erdx")).context(Kind::Data, &err)?;
                    adapters.insert(name, Arc::new(DocsStore::new(idx)));
                }
                SourceKind::SelfKnowledge => adapters.insert(name, Arc::new(SelfAdapter)),
            }
        }
        Ok((catalog, adapters))
    }
}

fn csv_files(path: &Path) -> std::io::Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut out = Vec::new();
    for e in std::fs::read_dir(path)? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.push(p);
        }
    }
    Ok(out)
}
