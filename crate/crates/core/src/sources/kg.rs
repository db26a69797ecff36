//! Entity pages standing in for a knowledge graph: title lookup, disambiguation, infobox-first
//! attributes with model extraction over the page body as fallback.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{Condition, GetNode, CONTENT, SEARCH_KEY};
use crate::gateway::{normalize_name, Gateway};
use crate::value::{Record, Value};

use super::{GetContext, SourceAdapter, SourceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityPage {
    pub title: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub infobox: BTreeMap<String, String>,
    #[serde(default)]
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disambiguation_of: Option<Vec<String>>,
}

impl EntityPage {
    pub fn new(title: impl Into<String>, body: impl Into<String>) -> Self {
        EntityPage {
            title: title.into(),
            aliases: Vec::new(),
            infobox: BTreeMap::new(),
            body: body.into(),
            disambiguation_of: None,
        }
    }

    pub fn with_info(mut self, key: &str, value: &str) -> Self {
        self.infobox.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_alias(mut self, alias: &str) -> Self {
        self.aliases.push(alias.to_string());
        self
    }

    pub fn disambiguation(title: impl Into<String>, candidates: &[&str]) -> Self {
        let mut p = EntityPage::new(title, "");
        p.disambiguation_of = Some(candidates.iter().map(|c| c.to_string()).collect());
        p
    }

    pub fn is_disambiguation(&self) -> bool {
        self.disambiguation_of.as_ref().is_some_and(|c| !c.is_empty())
    }

    /// Infobox value whose key equals `attr` after normalization.
    pub fn infobox_value(&self, attr: &str) -> Option<&str> {
        let want = normalize_name(attr);
        self.infobox
            .iter()
            .find(|(k, _)| normalize_name(k) == want)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct KgStore {
    pages: Vec<EntityPage>,
    exact: HashMap<String, usize>,
    folded: HashMap<String, usize>,
}

impl KgStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pages(pages: impl IntoIterator<Item = EntityPage>) -> Result<Self, SourceError> {
        let mut s = KgStore::new();
        for p in pages {
            s.add_page(p)?;
        }
        Ok(s)
    }

    pub fn add_page(&mut self, page: EntityPage) -> Result<(), SourceError> {
        if self.exact.get(&page.title).is_some_and(|&i| self.pages[i].title == page.title) {
            return Err(SourceError::Data(format!("duplicate page title {:?}", page.title)));
        }
        let mut keys = std::collections::BTreeSet::new();
        for k in page.infobox.keys() {
            if !keys.insert(normalize_name(k)) {
                return Err(SourceError::Data(format!("{}: infobox key {k:?} collides after case-folding", page.title)));
            }
        }
        let idx = self.pages.len();
        // titles win over aliases of other pages
        self.exact.insert(page.title.clone(), idx);
        self.folded.entry(normalize_name(&page.title)).or_insert(idx);
        for a in &page.aliases {
            self.exact.entry(a.clone()).or_insert(idx);
            self.folded.entry(normalize_name(a)).or_insert(idx);
        }
        self.pages.push(page);
        Ok(())
    }

    /// Pages from a JSON file holding one page object or an array of them.
    pub fn add_json(&mut self, text: &str) -> Result<usize, SourceError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| SourceError::Data(e.to_string()))?;
        let pages: Vec<EntityPage> = if v.is_array() {
            serde_json::from_value(v)
        } else {
            serde_json::from_value(v).map(|p| vec![p])
        }
        .map_err(|e| SourceError::Data(e.to_string()))?;
        let n = pages.len();
        for p in pages {
            self.add_page(p)?;
        }
        Ok(n)
    }

    /// All `.json` files in a directory, in name order, or a single file.
    pub fn load_path(path: &Path) -> Result<Self, SourceError> {
        let mut s = KgStore::new();
        let files = if path.is_dir() {
            let mut f: Vec<_> = std::fs::read_dir(path)
                .map_err(|e| SourceError::Data(format!("{}: {e}", path.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            f.sort();
            f
        } else {
            vec![path.to_path_buf()]
        };
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| SourceError::Data(format!("{}: {e}", f.display())))?;
            s.add_json(&text)
                .map_err(|e| SourceError::Data(format!("{}: {e}", f.display())))?;
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), SourceError> {
        let text = serde_json::to_string_pretty(&self.pages).map_err(|e| SourceError::Data(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| SourceError::Data(format!("{}: {e}", path.display())))
    }

    pub fn pages(&self) -> &[EntityPage] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    fn lookup(&self, key: &str) -> Option<&EntityPage> {
        self.exact
            .get(key)
            .or_else(|| self.folded.get(&normalize_name(key)))
            .map(|&i| &self.pages[i])
    }

    /// Page for `search_key`; disambiguation pages are resolved by the gateway.
    pub fn resolve_entity(&self, search_key: &str, query: &str, gateway: &dyn Gateway) -> Result<&EntityPage, SourceError> {
        let page = self
            .lookup(search_key)
            .ok_or_else(|| SourceError::EntityNotFound(search_key.to_string()))?;
        let Some(candidates) = page.disambiguation_of.as_ref().filter(|c| !c.is_empty()) else {
            return Ok(page);
        };
        let pick = gateway.disambiguate(search_key, query, candidates)?;
        let title = &candidates[pick];
        self.lookup(title)
            .filter(|p| !p.is_disambiguation())
            .ok_or_else(|| SourceError::EntityNotFound(title.clone()))
    }
}

/// One value per attribute: `content` is the body, then the infobox, then model extraction.
pub fn get_attributes<'a, I>(page: &EntityPage, attrs: I, query: &str, gateway: &dyn Gateway) -> Result<Record, SourceError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = Record::new();
    for a in attrs {
        out.insert(a.to_string(), attribute(page, a, query, gateway)?);
    }
    Ok(out)
}

fn attribute(page: &EntityPage, attr: &str, query: &str, gateway: &dyn Gateway) -> Result<Value, SourceError> {
    if attr == CONTENT {
        return Ok(Value::Text(page.body.clone()));
    }
    if let Some(v) = page.infobox_value(attr) {
        return Ok(Value::Text(v.to_string()));
    }
    if normalize_name(attr) == "title" {
        return Ok(Value::Text(page.title.clone()));
    }
    Ok(match gateway.extract_attribute(&page.body, attr, query)? {
        Some(v) => Value::Text(v),
        None => Value::Null,
    })
}

impl SourceAdapter for KgStore {
    /// One record per bound `search_key` that resolves and satisfies the remaining conjuncts.
    /// Keys with no page are skipped, so a join that names unknown entities shrinks.
    fn get(&self, node: &GetNode, ctx: &GetContext<'_>) -> Result<Vec<Record>, SourceError> {
        let cond = node.condition.as_ref().ok_or(SourceError::MissingSearchKey)?;
        let keys = cond.search_keys().ok_or(SourceError::MissingSearchKey)?;
        let checks: Vec<&Condition> = cond
            .conjuncts()
            .into_iter()
            .filter(|c| !c.attributes().contains(SEARCH_KEY))
            .collect();
        let mut out = Vec::new();
        for key in keys {
            let page = match self.resolve_entity(&key, ctx.query, ctx.gateway) {
                Ok(p) => p,
                Err(SourceError::EntityNotFound(k)) => {
                    log::info!("{}: no page for {k:?}", node.alias);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut cache: BTreeMap<String, Value> = BTreeMap::new();
            for c in &checks {
                for a in c.attributes() {
                    if !cache.contains_key(a) {
                        cache.insert(a.to_string(), attribute(page, a, ctx.query, ctx.gateway)?);
                    }
                }
            }
            let lookup = |a: &str| cache.get(a).cloned().unwrap_or(Value::Null);
            if !checks.iter().all(|c| c.eval(&lookup) == Some(true)) {
                continue;
            }
            let mut rec = Record::new();
            for a in node.all_attributes() {
                let v = if a == SEARCH_KEY {
                    Value::Text(key.clone())
                } else if let Some(v) = cache.get(&a) {
                    v.clone()
                } else {
                    attribute(page, &a, ctx.query, ctx.gateway)?
                };
                rec.insert(a, v);
            }
            out.push(rec);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::parse_condition;
    use crate::gateway::MockGateway;

    fn store() -> KgStore {
        KgStore::from_pages([
            EntityPage::new("DeepMind", "DeepMind is an AI lab owned by Google.")
                .with_info("Parent_company", "Google")
                .with_info("Founded", "2010"),
            EntityPage::disambiguation("Mercury", &["Mercury (planet)", "Mercury (element)"]),
            EntityPage::new("Mercury (planet)", "The smallest planet."),
            EntityPage::new("Mercury (element)", "A chemical element.").with_alias("Hg"),
        ])
        .unwrap()
    }

    #[test]
    fn resolution() {
        let s = store();
        let gw = MockGateway::new();
        assert_eq!(s.resolve_entity("DeepMind", "", &gw).unwrap().title, "DeepMind");
        assert_eq!(s.resolve_entity("deepmind", "", &gw).unwrap().title, "DeepMind");
        assert_eq!(s.resolve_entity("Hg", "", &gw).unwrap().title, "Mercury (element)");
        assert_eq!(
            s.resolve_entity("Atlantis", "", &gw),
            Err(SourceError::EntityNotFound("Atlantis".into()))
        );
        let gw = MockGateway::lenient().with_rule("Mercury", "2");
        assert_eq!(s.resolve_entity("Mercury", "chemistry", &gw).unwrap().title, "Mercury (element)");
    }

    #[test]
    fn structured_first() {
        let s = store();
        let gw = MockGateway::new().with_fact_containing("owned by Google", "ceo", "Demis Hassabis");
        let page = s.resolve_entity("DeepMind", "", &gw).unwrap();
        let r = get_attributes(page, ["parent company", "content"], "", &gw).unwrap();
        assert_eq!(r["parent company"], Value::from("Google"));
        assert_eq!(r["content"], Value::from(page.body.as_str()));
        assert_eq!(gw.calls(), 0);
        let r = get_attributes(page, ["ceo", "revenue"], "", &gw).unwrap();
        assert_eq!(r["ceo"], Value::from("Demis Hassabis"));
        assert_eq!(r["revenue"], Value::Null);
        assert_eq!(gw.calls(), 2);
    }

    #[test]
    fn adapter_checks_conditions() {
        let s = store();
        let gw = MockGateway::new();
        let ctx = GetContext { gateway: &gw, query: "" };
        let mk = |c: &str| GetNode::new("g1", "WIKI", Some(parse_condition(c).unwrap()), ["founded"]);
        let rows = s.get(&mk(r#"search_key = "DeepMind" AND founded > 2000"#), &ctx).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0]["founded"], Value::from("2010"));
        let rows = s.get(&mk(r#"search_key = "DeepMind" AND founded > 2015"#), &ctx).unwrap();
        assert!(rows.is_empty());
        assert_eq!(s.get(&mk("founded > 2000"), &ctx), Err(SourceError::MissingSearchKey));
    }

    #[test]
    fn json_ingest() {
        let mut s = KgStore::new();
        let n = s
            .add_json(r#"[{"title":"A","infobox":{"x":"1"},"body":"a"},{"title":"B","aliases":["b2"]}]"#)
            .unwrap();
        assert_eq!(n, 2);
        assert!(s.add_json(r#"{"title":"A"}"#).is_err());
        assert!(s.add_json(r#"{"title":"C","infobox":{"Key":"1","key":"2"}}"#).is_err());
    }
}
