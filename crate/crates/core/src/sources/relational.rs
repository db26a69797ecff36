//! Relational tables in an embedded SQLite database.
//!
//! GET conditions are translated to SQL with literals coerced to the column's type. `~` is
//! resolved against the stored values first (exact, then case-insensitive substring, then
//! nearest embedding) and rewritten to equalities.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::sync::Mutex;

use rusqlite::types::ValueRef;
use rusqlite::Connection;

use crate::catalog::TableStats;
use crate::chain::{Condition, GetNode};
use crate::embed::{cosine, Embedder, StubEmbedder};
use crate::value::{format_number, CmpOp, Record, Value};

use super::{compute_table_stats, split_table_selector, GetContext, SourceAdapter, SourceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Number,
    Text,
}

#[derive(Debug, Clone)]
struct TableMeta {
    columns: Vec<(String, ColumnType)>,
    stats: TableStats,
}

impl TableMeta {
    fn column_type(&self, table: &str, column: &str) -> Result<ColumnType, SourceError> {
        self.columns
            .iter()
            .find(|(c, _)| c == column)
            .map(|(_, t)| *t)
            .ok_or_else(|| SourceError::UnknownColumn {
                table: table.to_string(),
                column: column.to_string(),
            })
    }
}

/// Values matched by [`RelationalStore::fuzzy_resolve`] and the tier that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyMatch {
    /// 1 exact, 2 case-insensitive substring, 3 embedding nearest neighbor; `None` when all miss.
    pub tier: Option<u8>,
    pub values: Vec<String>,
}

pub struct RelationalStore {
    conn: Mutex<Connection>,
    tables: BTreeMap<String, TableMeta>,
    /// Embedding fallback only runs on columns with at most this many distinct values.
    pub fallback_threshold: u64,
    /// Smallest cosine similarity accepted by the embedding tier.
    pub min_similarity: f32,
    embedder: Box<dyn Embedder>,
}

fn store_err(e: rusqlite::Error) -> SourceError {
    SourceError::Store(e.to_string())
}

const KEYWORDS: &[&str] = &[
    "abort", "action", "add", "after", "all", "alter", "analyze", "and", "as", "asc", "attach", "autoincrement",
    "before", "begin", "between", "by", "cascade", "case", "cast", "check", "collate", "column", "commit",
    "conflict", "constraint", "create", "cross", "current", "current_date", "current_time", "current_timestamp",
    "database", "default", "deferrable", "deferred", "delete", "desc", "detach", "distinct", "do", "drop", "each",
    "else", "end", "escape", "except", "exclude", "exclusive", "exists", "explain", "fail", "filter", "first",
    "following", "for", "foreign", "from", "full", "glob", "group", "groups", "having", "if", "ignore",
    "immediate", "in", "index", "indexed", "initially", "inner", "insert", "instead", "intersect", "into", "is",
    "isnull", "join", "key", "last", "left", "like", "limit", "match", "materialized", "natural", "no", "not",
    "nothing", "notnull", "null", "nulls", "of", "offset", "on", "or", "order", "others", "outer", "over",
    "partition", "plan", "pragma", "preceding", "primary", "query", "raise", "range", "recursive", "references",
    "regexp", "reindex", "release", "rename", "replace", "restrict", "returning", "right", "rollback", "row",
    "rows", "savepoint", "select", "set", "table", "temp", "temporary", "then", "ties", "to", "transaction",
    "trigger", "true", "false", "unbounded", "union", "unique", "update", "using", "vacuum", "values", "view",
    "virtual", "when", "where", "window", "with", "without",
];

/// Quote an identifier unless it is a plain, non-keyword name.
pub fn quote_ident(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&name.to_ascii_lowercase().as_str());
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn quote_text(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn sql_literal(v: &Value) -> String {
    match v {
        Value::Null => "NULL".into(),
        Value::Number(n) => format_number(*n),
        Value::Text(s) => quote_text(s),
    }
}

/// Literal coerced to the column type. Numeric text on a number column is parsed, anything else
/// is a type error; numbers on a text column become their text form.
fn coerce(value: &Value, ty: ColumnType, column: &str) -> Result<Value, SourceError> {
    Ok(match (value, ty) {
        (Value::Null, _) => Value::Null,
        (Value::Number(n), ColumnType::Text) => Value::Text(format_number(*n)),
        (Value::Text(s), ColumnType::Number) => match s.trim().parse::<f64>() {
            Ok(n) if n.is_finite() => Value::Number(n),
            _ => {
                return Err(SourceError::Type(format!(
                    "column {column} is numeric, literal {s:?} is not"
                )))
            }
        },
        (v, _) => v.clone(),
    })
}

/// How `~` is rendered.
enum FuzzyMode<'a> {
    /// Case-insensitive containment in SQL.
    Pattern,
    /// Resolved against stored values through the fuzzy tiers.
    Resolve(&'a RelationalStore),
}

fn render_where(
    cond: &Condition,
    table: &str,
    meta: &TableMeta,
    mode: &FuzzyMode<'_>,
    top: bool,
) -> Result<String, SourceError> {
    let group = |parts: Vec<String>, sep: &str| {
        let s = parts.join(sep);
        if top {
            s
        } else {
            format!("({s})")
        }
    };
    Ok(match cond {
        Condition::And(items) => group(
            items
                .iter()
                .map(|c| render_where(c, table, meta, mode, false))
                .collect::<Result<_, _>>()?,
            " AND ",
        ),
        Condition::Or(items) => group(
            items
                .iter()
                .map(|c| render_where(c, table, meta, mode, false))
                .collect::<Result<_, _>>()?,
            " OR ",
        ),
        Condition::Not(inner) => format!("NOT {}", render_where(inner, table, meta, mode, false)?),
        Condition::Cmp { attr, op, value } => {
            let ty = meta.column_type(table, attr)?;
            let col = quote_ident(attr);
            if matches!(op, CmpOp::Like | CmpOp::Fuzzy) && ty == ColumnType::Number {
                return Err(SourceError::Type(format!("{} on numeric column {attr}", op.symbol())));
            }
            let v = coerce(value, ty, attr)?;
            match (op, &v) {
                (CmpOp::Eq, Value::Null) => format!("{col} IS NULL"),
                (CmpOp::Ne, Value::Null) => format!("{col} IS NOT NULL"),
                (CmpOp::Fuzzy, Value::Null) => format!("{col} = NULL"),
                (CmpOp::Fuzzy, v) => match mode {
                    FuzzyMode::Pattern => format!("instr(lower({col}), lower({})) > 0", sql_literal(v)),
                    FuzzyMode::Resolve(store) => {
                        let m = store.fuzzy_resolve(table, attr, &v.to_plain_string())?;
                        match m.values.len() {
                            0 => "0".to_string(),
                            1 => format!("{col} = {}", quote_text(&m.values[0])),
                            _ => format!(
                                "{col} IN ({})",
                                m.values.iter().map(|s| quote_text(s)).collect::<Vec<_>>().join(", ")
                            ),
                        }
                    }
                },
                (op, v) => format!("{col} {} {}", op.symbol(), sql_literal(v)),
            }
        }
    })
}

fn read_value(v: ValueRef<'_>) -> Value {
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Number(i as f64),
        ValueRef::Real(f) => Value::Number(f),
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Text(String::from_utf8_lossy(b).into_owned()),
    }
}

impl RelationalStore {
    fn with_connection(conn: Connection) -> Result<Self, SourceError> {
        conn.pragma_update(None, "case_sensitive_like", true).map_err(store_err)?;
        Ok(RelationalStore {
            conn: Mutex::new(conn),
            tables: BTreeMap::new(),
            fallback_threshold: 1000,
            min_similarity: 0.25,
            embedder: Box::new(StubEmbedder::default()),
        })
    }

    pub fn in_memory() -> Result<Self, SourceError> {
        Self::with_connection(Connection::open_in_memory().map_err(store_err)?)
    }

    /// Open (or create) a database file and load metadata of the tables already in it.
    pub fn open(path: &Path) -> Result<Self, SourceError> {
        let mut store = Self::with_connection(Connection::open(path).map_err(store_err)?)?;
        let names: Vec<String> = {
            let conn = store.conn.lock().unwrap();
            let mut stmt = conn
                .prepare("SELECT name FROM sqlite_master WHERE type = 'table' ORDER BY name")
                .map_err(store_err)?;
            let rows = stmt.query_map([], |r| r.get::<_, String>(0)).map_err(store_err)?;
            rows.collect::<Result<_, _>>().map_err(store_err)?
        };
        for name in names {
            let meta = store.load_meta(&name)?;
            store.tables.insert(name, meta);
        }
        Ok(store)
    }

    pub fn with_embedder(mut self, embedder: Box<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    fn load_meta(&self, table: &str) -> Result<TableMeta, SourceError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn
            .prepare(&format!("PRAGMA table_info({})", quote_ident(table)))
            .map_err(store_err)?;
        let columns: Vec<(String, ColumnType)> = stmt
            .query_map([], |r| {
                let name: String = r.get(1)?;
                let ty: String = r.get(2)?;
                Ok((name, if ty.eq_ignore_ascii_case("REAL") { ColumnType::Number } else { ColumnType::Text }))
            })
            .map_err(store_err)?
            .collect::<Result<_, _>>()
            .map_err(store_err)?;
        let cols: Vec<String> = columns.iter().map(|(c, _)| quote_ident(c)).collect();
        let sql = format!("SELECT {} FROM {}", cols.join(", "), quote_ident(table));
        let rows = query_rows(&conn, &sql, columns.len())?;
        let names: Vec<String> = columns.iter().map(|(c, _)| c.clone()).collect();
        Ok(TableMeta {
            stats: compute_table_stats(table, &names, &rows),
            columns,
        })
    }

    /// Create and fill a table. Column types are numeric when every non-null cell is a number.
    pub fn add_table(&mut self, name: &str, columns: Vec<String>, rows: Vec<Vec<Value>>) -> Result<TableStats, SourceError> {
        if self.tables.contains_key(name) {
            return Err(SourceError::Data(format!("table {name} already exists")));
        }
        if columns.is_empty() {
            return Err(SourceError::Data(format!("table {name} has no columns")));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
            return Err(SourceError::Data(format!(
                "{name}: row has {} cells, header has {}",
                bad.len(),
                columns.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = columns.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(SourceError::Data(format!("{name}: duplicate column {dup}")));
        }
        let typed: Vec<(String, ColumnType)> = columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let numeric = rows.iter().all(|r| !matches!(r[i], Value::Text(_)));
                (c.clone(), if numeric { ColumnType::Number } else { ColumnType::Text })
            })
            .collect();
        // a text column keeps numbers as their text form
        let rows: Vec<Vec<Value>> = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .zip(&typed)
                    .map(|(v, (_, ty))| match (v, ty) {
                        (Value::Number(n), ColumnType::Text) => Value::Text(format_number(n)),
                        (v, _) => v,
                    })
                    .collect()
            })
            .collect();
        {
            let mut conn = self.conn.lock().unwrap();
            let tx = conn.transaction().map_err(store_err)?;
            let defs: Vec<String> = typed
                .iter()
                .map(|(c, t)| format!("{} {}", quote_ident(c), if *t == ColumnType::Number { "REAL" } else { "TEXT" }))
                .collect();
            tx.execute_batch(&format!("CREATE TABLE {} ({});", quote_ident(name), defs.join(", ")))
                .map_err(store_err)?;
            {
                let marks = vec!["?"; typed.len()].join(", ");
                let mut stmt = tx
                    .prepare(&format!("INSERT INTO {} VALUES ({marks})", quote_ident(name)))
                    .map_err(store_err)?;
                for row in &rows {
                    let params: Vec<rusqlite::types::Value> = row
                        .iter()
                        .map(|v| match v {
                            Value::Null => rusqlite::types::Value::Null,
                            Value::Number(n) => rusqlite::types::Value::Real(*n),
                            Value::Text(s) => rusqlite::types::Value::Text(s.clone()),
                        })
                        .collect();
                    stmt.execute(rusqlite::params_from_iter(params)).map_err(store_err)?;
                }
            }
            tx.commit().map_err(store_err)?;
        }
        let stats = compute_table_stats(name, &columns, &rows);
        self.tables.insert(
            name.to_string(),
            TableMeta {
                columns: typed,
                stats: stats.clone(),
            },
        );
        Ok(stats)
    }

    /// Load a CSV with a header row. Empty cells are null; a column whose non-empty cells all
    /// parse as numbers is numeric.
    pub fn add_csv<R: Read>(&mut self, name: &str, reader: R) -> Result<TableStats, SourceError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| SourceError::Data(format!("{name}: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut raw: Vec<Vec<String>> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SourceError::Data(format!("{name}: {e}")))?;
            raw.push(rec.iter().map(str::to_string).collect());
        }
        let numeric: Vec<bool> = (0..header.len())
            .map(|i| {
                raw.iter()
                    .filter_map(|r| r.get(i))
                    .filter(|c| !c.is_empty())
                    .all(|c| c.trim().parse::<f64>().is_ok_and(f64::is_finite))
            })
            .collect();
        let rows = raw
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        if c.is_empty() {
                            Value::Null
                        } else if numeric.get(i).copied().unwrap_or(false) {
                            Value::Number(c.trim().parse().unwrap())
                        } else {
                            Value::Text(c)
                        }
                    })
                    .collect()
            })
            .collect();
        self.add_table(name, header, rows)
    }

    pub fn table_stats(&self) -> Vec<TableStats> {
        self.tables.values().map(|m| m.stats.clone()).collect()
    }

    pub fn column_type(&self, table: &str, column: &str) -> Result<ColumnType, SourceError> {
        self.meta(table)?.column_type(table, column)
    }

    fn meta(&self, table: &str) -> Result<&TableMeta, SourceError> {
        self.tables.get(table).ok_or_else(|| SourceError::UnknownTable(table.to_string()))
    }

    fn select_sql(&self, node: &GetNode, mode: &FuzzyMode<'_>) -> Result<(String, Vec<String>), SourceError> {
        let (table, rest) = split_table_selector(node.condition.as_ref())?;
        let meta = self.meta(&table)?;
        let attrs: Vec<String> = node.all_attributes().into_iter().collect();
        for a in &attrs {
            meta.column_type(&table, a)?;
        }
        let projection = if attrs.is_empty() {
            "1".to_string()
        } else {
            attrs.iter().map(|a| quote_ident(a)).collect::<Vec<_>>().join(", ")
        };
        let filter = match &rest {
            Some(c) => render_where(c, &table, meta, mode, true)?,
            None => "TRUE".to_string(),
        };
        Ok((
            format!("SELECT {projection} FROM {} WHERE {filter};", quote_ident(&table)),
            attrs,
        ))
    }

    /// SQL for a GET, with `~` as a case-insensitive containment test.
    pub fn translate_get_to_sql(&self, node: &GetNode) -> Result<String, SourceError> {
        self.select_sql(node, &FuzzyMode::Pattern).map(|(sql, _)| sql)
    }

    /// Run a `SELECT` and return its rows keyed by output column name.
    pub fn query_sql(&self, sql: &str) -> Result<Vec<Record>, SourceError> {
        let conn = self.conn.lock().unwrap();
        let mut stmt = conn.prepare(sql).map_err(store_err)?;
        let names: Vec<String> = stmt.column_names().into_iter().map(str::to_string).collect();
        let mut rows = stmt.query([]).map_err(store_err)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next().map_err(store_err)? {
            let mut rec = Record::new();
            for (i, n) in names.iter().enumerate() {
                rec.insert(n.clone(), read_value(row.get_ref(i).map_err(store_err)?));
            }
            out.push(rec);
        }
        Ok(out)
    }

    /// Stored values of a text column matching `needle`, from the first tier that matches.
    pub fn fuzzy_resolve(&self, table: &str, column: &str, needle: &str) -> Result<FuzzyMatch, SourceError> {
        let meta = self.meta(table)?;
        if meta.column_type(table, column)? == ColumnType::Number {
            return Err(SourceError::Type(format!("~ on numeric column {column}")));
        }
        let sql = format!(
            "SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL ORDER BY {c}",
            c = quote_ident(column),
            t = quote_ident(table)
        );
        let distinct: Vec<String> = {
            let conn = self.conn.lock().unwrap();
            query_rows(&conn, &sql, 1)?
                .into_iter()
                .map(|mut r| r.remove(0).to_plain_string())
                .collect()
        };
        let hit = |tier: u8, values: Vec<String>| FuzzyMatch {
            tier: Some(tier),
            values,
        };
        let exact: Vec<String> = distinct.iter().filter(|v| v.as_str() == needle).cloned().collect();
        if !exact.is_empty() {
            return Ok(hit(1, exact));
        }
        let folded = needle.to_lowercase();
        let partial: Vec<String> = distinct
            .iter()
            .filter(|v| v.to_lowercase().contains(&folded))
            .cloned()
            .collect();
        if !partial.is_empty() {
            return Ok(hit(2, partial));
        }
        if !distinct.is_empty() && distinct.len() as u64 <= self.fallback_threshold {
            let q = self.embedder.embed(needle);
            let mut best: Option<(f32, &String)> = None;
            for v in &distinct {
                let s = cosine(&q, &self.embedder.embed(v));
                if best.is_none_or(|(b, _)| s > b) {
                    best = Some((s, v));
                }
            }
            if let Some((s, v)) = best {
                if s >= self.min_similarity {
                    return Ok(hit(3, vec![v.clone()]));
                }
            }
        }
        Ok(FuzzyMatch {
            tier: None,
            values: Vec::new(),
        })
    }

    /// Execute a GET; `~` goes through [`Self::fuzzy_resolve`].
    pub fn relational_get(&self, node: &GetNode) -> Result<Vec<Record>, SourceError> {
        let (sql, attrs) = self.select_sql(node, &FuzzyMode::Resolve(self))?;
        log::debug!("{sql}");
        let conn = self.conn.lock().unwrap();
        let rows = query_rows(&conn, &sql, if attrs.is_empty() { 1 } else { attrs.len() })?;
        Ok(rows
            .into_iter()
            .map(|r| attrs.iter().cloned().zip(r).collect())
            .collect())
    }
}

fn query_rows(conn: &Connection, sql: &str, width: usize) -> Result<Vec<Vec<Value>>, SourceError> {
    let mut stmt = conn.prepare(sql).map_err(store_err)?;
    let mut rows = stmt.query([]).map_err(store_err)?;
    let mut out = Vec::new();
    while let Some(row) = rows.next().map_err(store_err)? {
        let mut r = Vec::with_capacity(width);
        for i in 0..width {
            r.push(read_value(row.get_ref(i).map_err(store_err)?));
        }
        out.push(r);
    }
    Ok(out)
}

impl SourceAdapter for RelationalStore {
    fn get(&self, node: &GetNode, _ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        self.relational_get(node)
    }
}
