use std::collections::BTreeSet;
use std::sync::Arc;

use errag_core::catalog::{ColumnStats, TableStats};
use errag_core::chain::render_condition;
use errag_core::executor::{
    estimate_cardinality, estimate_join, expand_join_condition, Adapters, EntitySet, JoinExpansion, PlanNode,
};
use errag_core::postproc::eval_template;
use errag_core::sources::kg::{EntityPage, KgStore};
use errag_core::sources::relational::RelationalStore;
use errag_core::{
    parse_chain, Cardinality, Catalog, CmpOp, Condition, Executor, GetNode, JoinEdge, MockGateway, Record,
    SourceDescriptor, SourceKind, Value,
};

use crate::{ensure, Outcome};

fn record(pairs: &[(&str, Value)]) -> Record {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

fn set(records: Vec<Record>) -> EntitySet {
    EntitySet {
        records,
        provenance: BTreeSet::from(["g1".to_string()]),
    }
}

const DEEPMIND_BODY: &str = "DeepMind is an AI research laboratory founded in 2010. It was acquired in 2014 and now operates as a subsidiary of Google.";

fn semantic_join() -> Result<(), String> {
    let gw = MockGateway::new().with_fact_containing("subsidiary of Google", "parent_company", "Google");
    let bound = set(vec![record(&[("g1.content", Value::text(DEEPMIND_BODY))])]);
    let edge = JoinEdge::semantic("content", "parent_company", "search_key");
    let got = expand_join_condition(&bound, "g1.content", &edge, "g2", &gw, "", 200).map_err(|e| e.to_string())?;
    ensure(got == JoinExpansion::Filter(Condition::cmp("search_key", CmpOp::Eq, "Google")), || {
        format!("(a) expansion was {got:?}")
    })?;

    let kg = KgStore::from_pages([
        EntityPage::new("DeepMind", DEEPMIND_BODY).with_info("founded", "2010"),
        EntityPage::new("Google", "Google LLC is a technology company.").with_info("founded", "1998"),
    ])
    .map_err(|e| e.to_string())?;
    let mut catalog = Catalog::new();
    catalog
        .register_source(SourceDescriptor::new("WIKI", SourceKind::KnowledgeGraph, "pages"))
        .map_err(|e| e.to_string())?;
    let mut adapters = Adapters::new();
    adapters.insert("WIKI", Arc::new(kg));
    let chain = parse_chain(
        r#"GET(WIKI, search_key = "DeepMind", {content}).JOIN(content, parent_company, search_key).GET(WIKI, , {search_key, founded})"#,
    )
    .map_err(|e| e.to_string())?;
    let out = Executor::new(&catalog, &adapters, &gw).execute_chain(&chain).map_err(|e| e.to_string())?;
    ensure(out.result.len() == 1, || format!("(a) {} records", out.result.len()))?;
    let r = &out.result.records[0];
    ensure(r.get("g2.search_key") == Some(&Value::text("Google")), || format!("(a) record {r:?}"))?;
    ensure(r.get("g2.founded") == Some(&Value::text("1998")), || format!("(a) record {r:?}"))
}

fn or_expansion() -> Result<(), String> {
    let gw = MockGateway::new();
    let edge = JoinEdge::relational("a1", CmpOp::Eq, "a2");
    let two = set(vec![
        record(&[("g1.a1", Value::text("x"))]),
        record(&[("g1.a1", Value::text("y"))]),
    ]);
    let got = expand_join_condition(&two, "g1.a1", &edge, "g2", &gw, "", 200).map_err(|e| e.to_string())?;
    let JoinExpansion::Filter(cond) = got else {
        return Err(format!("(b) got {got:?}"));
    };
    ensure(render_condition(&cond) == r#"a2 = "x" OR a2 = "y""#, || format!("(b) rendered {}", render_condition(&cond)))?;
    let dup = set(vec![
        record(&[("g1.a1", Value::text("x"))]),
        record(&[("g1.a1", Value::text("x"))]),
    ]);
    let got = expand_join_condition(&dup, "g1.a1", &edge, "g2", &gw, "", 200).map_err(|e| e.to_string())?;
    ensure(got == JoinExpansion::Filter(Condition::cmp("a2", CmpOp::Eq, "x")), || format!("(b) dedup gave {got:?}"))
}

fn stats(table: &str, rows: u64, cols: &[(&str, u64)]) -> TableStats {
    TableStats {
        table: table.into(),
        row_count: rows,
        columns: cols
            .iter()
            .map(|(c, d)| ColumnStats {
                column: c.to_string(),
                min: None,
                max: None,
                distinct_count: Some(*d),
            })
            .collect(),
    }
}

fn cardinality_rules() -> Result<(), String> {
    let mut catalog = Catalog::new();
    let reg = |c: &mut Catalog, d: SourceDescriptor| c.register_source(d).map_err(|e| e.to_string());
    reg(&mut catalog, SourceDescriptor::new("WIKI", SourceKind::KnowledgeGraph, ""))?;
    reg(&mut catalog, SourceDescriptor::new("WEB", SourceKind::Documents, ""))?;
    reg(
        &mut catalog,
        SourceDescriptor::new("DB", SourceKind::Relational, "").with_tables(vec![
            stats("t", 100, &[("k", 20)]),
            stats("l", 30, &[("x", 10)]),
            stats("r", 50, &[("y", 5)]),
        ]),
    )?;
    let est = |n: &GetNode| estimate_cardinality(n, &catalog).map_err(|e| e.to_string());
    let cond = |s: &str| Some(errag_core::chain::parse_condition(s).unwrap());

    let keyed = GetNode::new("g1", "WIKI", cond(r#"search_key = "DeepMind""#), ["content"]);
    ensure(est(&keyed)? == Cardinality::Finite(1), || "(c) keyed KG node".into())?;
    let unkeyed = GetNode::new("g1", "WIKI", cond(r#"founded = "2010""#), ["content"]);
    ensure(est(&unkeyed)? == Cardinality::Infinite, || "(c) unkeyed KG node".into())?;
    let eq = GetNode::new("g1", "DB", cond(r#"table = "t" AND k = 3"#), ["k"]);
    ensure(est(&eq)? == Cardinality::Finite(5), || format!("(c) 100 rows / 20 distinct gave {:?}", est(&eq)))?;

    let plan = |n: GetNode, c: Cardinality| PlanNode {
        node: n,
        est: c,
        join_hint: None,
    };
    let join = |b: &PlanNode, n: &PlanNode, e: &JoinEdge| estimate_join(b, n, e, &catalog).map_err(|e| e.to_string());

    let bound = plan(keyed.clone(), Cardinality::Finite(1));
    let target = plan(GetNode::new("g2", "WIKI", None, ["search_key"]), Cardinality::Infinite);
    let sem = JoinEdge::semantic("content", "parent_company", "search_key");
    ensure(join(&bound, &target, &sem)? == Cardinality::Finite(1), || "(c) semantic join onto search_key".into())?;

    let left = plan(GetNode::new("g1", "DB", cond(r#"table = "l""#), ["x"]), Cardinality::Finite(3));
    let right = GetNode::new("g2", "DB", cond(r#"table = "r""#), ["y"]);
    let right = plan(right.clone(), est(&right)?);
    let equi = JoinEdge::relational("x", CmpOp::Eq, "y");
    ensure(join(&left, &right, &equi)? == Cardinality::Finite(15), || {
        format!("(c) equi-join gave {:?}", join(&left, &right, &equi))
    })?;

    let two = plan(GetNode::new("g1", "DB", cond(r#"table = "l""#), ["x"]), Cardinality::Finite(2));
    let docs = plan(GetNode::new("g2", "WEB", None, ["chunk"]), Cardinality::Infinite);
    let e = JoinEdge::relational("x", CmpOp::Eq, "chunk");
    ensure(join(&two, &docs, &e)? == Cardinality::Infinite, || "(c) join into unkeyed docs".into())
}

fn revenue_template() -> Result<(), String> {
    let data = EntitySet {
        records: [("Company A", "120M"), ("Company B", "8500K"), ("Company C", "95M"), ("Company D", "40M")]
            .iter()
            .map(|(c, r)| record(&[("company", Value::text(*c)), ("revenue", Value::text(*r))]))
            .collect(),
        provenance: BTreeSet::new(),
    };
    let tpl = r#"top-3 by revenue: {join_str(map(top(sort_by(Data, num(r.revenue), desc), 3), r.company), ", ")}"#;
    let out = eval_template(tpl, &data);
    ensure(out == "top-3 by revenue: Company A, Company C, Company D", || format!("(d) got {out:?}"))
}

fn date_then_price() -> Result<(), String> {
    let mut db = RelationalStore::in_memory().map_err(|e| e.to_string())?;
    let mut tables = Vec::new();
    tables.push(
        db.add_csv(
            "events",
            "event,date\nNobel Prize in Physics 2023,2023-10-03\nNobel Prize in Chemistry 2023,2023-10-04\n".as_bytes(),
        )
        .map_err(|e| e.to_string())?,
    );
    tables.push(
        db.add_csv(
            "prices",
            "symbol,date,price\nNVDA,2023-10-02,447.82\nNVDA,2023-10-03,435.17\nNVDA,2023-10-04,440.41\nAAPL,2023-10-03,172.40\n"
                .as_bytes(),
        )
        .map_err(|e| e.to_string())?,
    );
    let mut catalog = Catalog::new();
    catalog
        .register_source(SourceDescriptor::new("DB_Finance", SourceKind::Relational, "").with_tables(tables))
        .map_err(|e| e.to_string())?;
    let mut adapters = Adapters::new();
    adapters.insert("DB_Finance", Arc::new(db));
    let chain = parse_chain(
        r#"GET(DB_Finance, table = "events" AND event = "Nobel Prize in Physics 2023", {date}).JOIN(left.date = right.date).GET(DB_Finance, table = "prices" AND symbol = "NVDA", {date, price})"#,
    )
    .map_err(|e| e.to_string())?;
    let gw = MockGateway::new();
    let out = Executor::new(&catalog, &adapters, &gw).execute_chain(&chain).map_err(|e| e.to_string())?;
    let expected = vec![record(&[
        ("g1.date", Value::text("2023-10-03")),
        ("g2.date", Value::text("2023-10-03")),
        ("g2.price", Value::Number(435.17)),
    ])];
    ensure(out.result.records == expected, || format!("(e) got {:?}", out.result.records))?;
    ensure(out.trace[0].popped == "g1", || format!("(e) first pop was {}", out.trace[0].popped))
}

pub fn worked_examples() -> Outcome {
    semantic_join()?;
    or_expansion()?;
    cardinality_rules()?;
    revenue_template()?;
    date_then_price()?;
    Ok("semantic join, OR expansion, 1/inf/stat estimates, revenue ranking, date-to-price chain".into())
}
