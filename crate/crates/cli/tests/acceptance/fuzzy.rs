use errag_core::embed::StubEmbedder;
use errag_core::sources::relational::RelationalStore;
use errag_core::Value;

use crate::{ensure, Outcome};

pub fn tiers() -> Outcome {
    let mut store = RelationalStore::in_memory()
        .map_err(|e| e.to_string())?
        .with_embedder(Box::new(StubEmbedder::default()));
    let titles = ["The Color of Money", "Raging Bull", "Taxi Driver", "Goodfellas"];
    store
        .add_table(
            "films",
            vec!["title".into()],
            titles.iter().map(|t| vec![Value::text(*t)]).collect(),
        )
        .map_err(|e| e.to_string())?;
    let cases = [
        ("Raging Bull", 1u8, "Raging Bull"),
        ("taxi", 2, "Taxi Driver"),
        ("colour of money", 3, "The Color of Money"),
    ];
    for (needle, tier, value) in cases {
        let m = store.fuzzy_resolve("films", "title", needle).map_err(|e| e.to_string())?;
        ensure(m.tier == Some(tier), || format!("{needle:?} resolved at tier {:?}", m.tier))?;
        ensure(m.values == vec![value.to_string()], || format!("{needle:?} resolved to {:?}", m.values))?;
    }
    Ok("exact -> 1, case-insensitive partial -> 2, embedding fallback -> 3".into())
}
