//! Python bindings: chain parsing, an in-process engine over CSV, page and document sources,
//! result templates and the selection utilities.

use std::collections::BTreeMap;
use std::sync::Arc;

use errag_core::executor::{Adapters, EntitySet};
use errag_core::gateway::MockSpec;
use errag_core::postproc::{self, parse_template};
use errag_core::selection::{self, ExecutionLogEntry};
use errag_core::sources::docs::{Bm25Params, ChunkIndex, ChunkSizes, DocsStore};
use errag_core::sources::kg::KgStore;
use errag_core::sources::relational::RelationalStore;
use errag_core::sources::{SelfAdapter, SourceAdapter};
use errag_core::{
    evalkit, parse_chain as core_parse_chain, render_chain, ApiChain, Catalog, Executor, MockGateway, Record,
    SourceDescriptor, SourceKind, Value,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(errag, ErragError, PyException);
create_exception!(errag, ChainSyntaxError, ErragError);
create_exception!(errag, ExecutionError, ErragError);
create_exception!(errag, SourceError, ErragError);

fn from_json<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if obj.is_none() {
        Ok(Value::Null)
    } else if let Ok(s) = obj.extract::<String>() {
        Ok(Value::Text(s))
    } else if let Ok(n) = obj.extract::<f64>() {
        Ok(Value::Number(n))
    } else {
        Err(PyValueError::new_err(format!("unsupported value {obj}")))
    }
}

fn to_entity_set(records: &Bound<'_, PyList>) -> PyResult<EntitySet> {
    let mut out = Vec::with_capacity(records.len());
    for item in records.iter() {
        let dict = item.cast::<PyDict>()?;
        let mut rec = Record::new();
        for (k, v) in dict.iter() {
            rec.insert(k.extract::<String>()?, to_value(&v)?);
        }
        out.push(rec);
    }
    Ok(EntitySet {
        records: out,
        provenance: Default::default(),
    })
}

/// A parsed GET/JOIN chain.
#[pyclass(frozen)]
struct Chain {
    inner: ApiChain,
}

#[pymethods]
impl Chain {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        parse_chain(text)
    }

    fn render(&self) -> String {
        render_chain(&self.inner)
    }

    #[getter]
    fn aliases(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.alias.clone()).collect()
    }

    #[getter]
    fn sources(&self) -> Vec<String> {
        self.inner.nodes.iter().map(|n| n.source.clone()).collect()
    }

    /// The chain as plain dicts and lists.
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.nodes.len()
    }

    fn __eq__(&self, other: &Chain) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Chain({:?})", render_chain(&self.inner))
    }
}

#[pyfunction]
fn parse_chain(text: &str) -> PyResult<Chain> {
    core_parse_chain(text)
        .map(|inner| Chain { inner })
        .map_err(|e| ChainSyntaxError::new_err(e.to_string()))
}

enum Store {
    Relational(Arc<RelationalStore>),
    Graph(Arc<KgStore>),
    Documents(Arc<DocsStore>),
    Model,
}

impl Store {
    fn adapter(&self) -> Arc<dyn SourceAdapter> {
        match self {
            Store::Relational(s) => s.clone(),
            Store::Graph(s) => s.clone(),
            Store::Documents(s) => s.clone(),
            Store::Model => Arc::new(SelfAdapter),
        }
    }

    fn kind(&self) -> SourceKind {
        match self {
            Store::Relational(_) => SourceKind::Relational,
            Store::Graph(_) => SourceKind::KnowledgeGraph,
            Store::Documents(_) => SourceKind::Documents,
            Store::Model => SourceKind::SelfKnowledge,
        }
    }
}

struct Registered {
    store: Store,
    summary: String,
}

/// Sources plus a mock gateway; chains execute in process.
#[pyclass]
struct Engine {
    sources: BTreeMap<String, Registered>,
    gateway: MockGateway,
}

fn source_err(e: impl std::fmt::Display) -> PyErr {
    SourceError::new_err(e.to_string())
}

impl Engine {
    fn slot(&mut self, name: &str, make: impl FnOnce() -> PyResult<Store>) -> PyResult<&mut Registered> {
        if !self.sources.contains_key(name) {
            let store = make()?;
            self.sources.insert(
                name.to_string(),
                Registered {
                    store,
                    summary: String::new(),
                },
            );
        }
        Ok(self.sources.get_mut(name).unwrap())
    }

    fn catalog(&self) -> PyResult<Catalog> {
        let mut catalog = Catalog::new();
        for (name, r) in &self.sources {
            let mut desc = SourceDescriptor::new(name, r.store.kind(), &r.summary);
            if let Store::Relational(db) = &r.store {
                desc = desc.with_tables(db.table_stats());
            }
            catalog.register_source(desc).map_err(source_err)?;
        }
        Ok(catalog)
    }
}

fn wrong_kind(name: &str) -> PyErr {
    SourceError::new_err(format!("source {name} already holds a different kind of data"))
}

#[pymethods]
impl Engine {
    /// `mock` is a JSON registry of canned responses, rules and facts.
    #[new]
    #[pyo3(signature = (mock = None))]
    fn new(mock: Option<&str>) -> PyResult<Self> {
        let gateway = match mock {
            None => MockGateway::new(),
            Some(text) => {
                let spec: MockSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
                MockGateway::from_spec(spec).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
        };
        Ok(Engine {
            sources: BTreeMap::new(),
            gateway,
        })
    }

    /// Load CSV text into `table` of relational source `source`. Returns the row count.
    fn add_csv(&mut self, source: &str, table: &str, csv: &str) -> PyResult<u64> {
        let slot = self.slot(source, || {
            Ok(Store::Relational(Arc::new(RelationalStore::in_memory().map_err(source_err)?)))
        })?;
        let Store::Relational(db) = &mut slot.store else {
            return Err(wrong_kind(source));
        };
        let db = Arc::get_mut(db).ok_or_else(|| source_err("source is in use"))?;
        let stats = db.add_csv(table, csv.as_bytes()).map_err(source_err)?;
        let cols: Vec<&str> = stats.columns.iter().map(|c| c.column.as_str()).collect();
        let entry = format!("{table}({})", cols.join(", "));
        slot.summary = if slot.summary.is_empty() { entry } else { format!("{}; {entry}", slot.summary) };
        Ok(stats.row_count)
    }

    /// Add entity pages (one JSON object or an array). Returns the number added.
    fn add_pages(&mut self, source: &str, pages_json: &str) -> PyResult<usize> {
        let slot = self.slot(source, || Ok(Store::Graph(Arc::new(KgStore::new()))))?;
        let Store::Graph(kg) = &mut slot.store else {
            return Err(wrong_kind(source));
        };
        let kg = Arc::get_mut(kg).ok_or_else(|| source_err("source is in use"))?;
        kg.add_json(pages_json).map_err(source_err)
    }

    /// Add a text document. Returns the number of child chunks in the source.
    fn add_document(&mut self, source: &str, name: &str, text: &str) -> PyResult<usize> {
        let slot = self.slot(source, || {
            Ok(Store::Documents(Arc::new(DocsStore::new(ChunkIndex::new(
                ChunkSizes::default(),
                Bm25Params::default(),
            )))))
        })?;
        let Store::Documents(docs) = &mut slot.store else {
            return Err(wrong_kind(source));
        };
        let docs = Arc::get_mut(docs).ok_or_else(|| source_err("source is in use"))?;
        docs.index.add_document(name, text);
        Ok(docs.index.children.len())
    }

    /// Register a source answered by the model itself.
    fn add_self(&mut self, source: &str) -> PyResult<()> {
        let slot = self.slot(source, || Ok(Store::Model))?;
        match slot.store {
            Store::Model => Ok(()),
            _ => Err(wrong_kind(source)),
        }
    }

    /// Set the schema description used for source selection.
    fn describe(&mut self, source: &str, summary: &str) -> PyResult<()> {
        let r = self
            .sources
            .get_mut(source)
            .ok_or_else(|| source_err(format!("unknown source {source}")))?;
        r.summary = summary.to_string();
        Ok(())
    }

    #[getter]
    fn source_names(&self) -> Vec<String> {
        self.sources.keys().cloned().collect()
    }

    /// Sources ranked for a question by the keyword heuristic.
    fn select(&self, question: &str) -> PyResult<Vec<String>> {
        selection::heuristic_select(question, &self.catalog()?).map_err(|e| ErragError::new_err(e.to_string()))
    }

    /// Run a chain (text or `Chain`). Returns `(records, trace)`.
    fn execute<'py>(&self, py: Python<'py>, chain: &Bound<'py, PyAny>) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
        let chain = match chain.cast::<Chain>() {
            Ok(c) => c.get().inner.clone(),
            Err(_) => parse_chain(&chain.extract::<String>()?)?.inner,
        };
        let catalog = self.catalog()?;
        let mut adapters = Adapters::new();
        for (name, r) in &self.sources {
            adapters.insert(name.as_str(), r.store.adapter());
        }
        let out = Executor::new(&catalog, &adapters, &self.gateway)
            .execute_chain(&chain)
            .map_err(|e| ExecutionError::new_err(e.to_string()))?;
        Ok((from_json(py, &out.result.records)?, from_json(py, &out.trace)?))
    }

    /// Number of gateway calls made so far.
    #[getter]
    fn gateway_calls(&self) -> usize {
        self.gateway.calls()
    }
}

/// Evaluate a result template over a list of record dicts. Evaluation errors give "no data".
#[pyfunction]
fn eval_template(template: &str, records: &Bound<'_, PyList>) -> PyResult<String> {
    let t = parse_template(template).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(t.eval(&to_entity_set(records)?))
}

#[pyfunction]
fn normalize_number(text: &str) -> PyResult<f64> {
    postproc::normalize_number(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn normalize_date(text: &str) -> PyResult<String> {
    postproc::normalize_date(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn stem_accuracy(prediction: &str, ground_truth: &str) -> u8 {
    evalkit::stem_accuracy(prediction, ground_truth)
}

#[pyfunction]
#[pyo3(signature = (pw_theta, pw_base, pl_theta, pl_base, beta = 0.1))]
fn dpo_loss(pw_theta: f64, pw_base: f64, pl_theta: f64, pl_base: f64, beta: f64) -> PyResult<f64> {
    selection::dpo_loss(pw_theta, pw_base, pl_theta, pl_base, beta).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn sft_loss(probabilities: Vec<f64>) -> PyResult<f64> {
    selection::sft_loss(&probabilities).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// SFT examples and preference pairs from an execution log in JSON-lines form.
#[pyfunction]
fn build_training_sets<'py>(py: Python<'py>, log_jsonl: &str) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let log: Vec<ExecutionLogEntry> =
        selection::read_log(log_jsonl.as_bytes()).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let sft = selection::build_sft_set(&log);
    let pairs = selection::build_dpo_pairs(&selection::top2_from_log(&log), &log)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((from_json(py, &sft)?, from_json(py, &pairs)?))
}

#[pymodule]
fn errag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("ErragError", py.get_type::<ErragError>())?;
    m.add("ChainSyntaxError", py.get_type::<ChainSyntaxError>())?;
    m.add("ExecutionError", py.get_type::<ExecutionError>())?;
    m.add("SourceError", py.get_type::<SourceError>())?;
    m.add_class::<Chain>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(parse_chain, m)?)?;
    m.add_function(wrap_pyfunction!(eval_template, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_number, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_date, m)?)?;
    m.add_function(wrap_pyfunction!(stem_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(dpo_loss, m)?)?;
    m.add_function(wrap_pyfunction!(sft_loss, m)?)?;
    m.add_function(wrap_pyfunction!(build_training_sets, m)?)?;
    Ok(())
}
