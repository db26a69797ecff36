//! selection → chain generation → execution → post-processing

use errag_core::executor::{ExecConfig, Execution};
use errag_core::gateway::{bindings, render_template, Gateway, PromptName, API_DEFINITION};
use errag_core::postproc::{parse_template, UnitTable, NO_DATA};
use errag_core::selection::heuristic_select;
use errag_core::{parse_chain, ApiChain, Catalog, EntitySet, Executor, SourceKind};

use crate::error::{fail, CliResult, Context, Kind};

pub struct Runtime<'a> {
    pub catalog: &'a Catalog,
    pub adapters: &'a errag_core::executor::Adapters,
    pub gateway: &'a dyn Gateway,
    /// Ask the model to pick sources instead of the offline heuristic.
    pub model_selection: bool,
}

pub enum Selection {
    Auto,
    Fixed(String),
}

/// A chosen label: one source or several joined by ` + `.
pub fn select(rt: &Runtime<'_>, question: &str, sel: &Selection) -> CliResult<Vec<String>> {
    let label = match sel {
        Selection::Fixed(s) => s.clone(),
        Selection::Auto if rt.model_selection => {
            let names: Vec<String> = rt.catalog.sources().map(|s| s.name.clone()).collect();
            let overview: String = rt
                .catalog
                .sources()
                .map(|s| format!("\n{}: {}", s.name, s.schema_summary))
                .collect();
            let prompt = render_template(
                PromptName::SourceSelection,
                &bindings([
                    ("Datasource_list", names.into()),
                    ("Source_description", overview.into()),
                    ("Query", question.into()),
                ]),
            )
            .context(Kind::Template, "")?;
            rt.gateway.complete(&prompt).context(Kind::Exec, "source selection")?.trim().to_string()
        }
        Selection::Auto => heuristic_select(question, rt.catalog)
            .context(Kind::Config, "")?
            .into_iter()
            .next()
            .unwrap_or_default(),
    };
    let picked: Vec<String> = label.split('+').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    for p in &picked {
        if rt.catalog.source(p).is_err() {
            return fail(Kind::Exec, format!("selected source {p:?} is not in the catalog"));
        }
    }
    if picked.is_empty() {
        return fail(Kind::Exec, "no source selected");
    }
    Ok(picked)
}

/// Ask the model for a chain over `sources`.
pub fn generate_chain(rt: &Runtime<'_>, question: &str, sources: &[String]) -> CliResult<String> {
    let schema: Vec<String> = sources
        .iter()
        .filter_map(|s| rt.catalog.source(s).ok())
        .map(|d| format!("{}: {}", d.name, d.schema_summary))
        .collect();
    let prompt = render_template(
        PromptName::ApiGeneration,
        &bindings([
            ("Datasource_name", sources.join(" + ").into()),
            ("API_definition", API_DEFINITION.into()),
            ("Datasource_schema", schema.join("\n").into()),
            ("Query", question.into()),
        ]),
    )
    .context(Kind::Template, "")?;
    let answer = rt.gateway.complete(&prompt).context(Kind::Exec, "chain generation")?;
    Ok(strip_fences(&answer))
}

fn strip_fences(s: &str) -> String {
    let t = s.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t.to_string();
    };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().trim_end_matches("```").trim().to_string()
}

pub fn parse(text: &str) -> CliResult<ApiChain> {
    parse_chain(text).context(Kind::Parse, "chain")
}

pub fn execute(rt: &Runtime<'_>, chain: &ApiChain, query: &str) -> CliResult<Execution> {
    let cfg = ExecConfig {
        query: query.to_string(),
        ..ExecConfig::default()
    };
    Executor::new(rt.catalog, rt.adapters, rt.gateway)
        .with_config(cfg)
        .execute_chain(chain)
        .context(Kind::Exec, "execution")
}

/// Template parse errors are reported; evaluation failures give the sentinel.
pub fn post_process(template: &str, data: &EntitySet, units: &UnitTable) -> CliResult<String> {
    let tpl = parse_template(template).context(Kind::Template, "template")?;
    Ok(tpl.eval_with(data, units))
}

/// Answer from the model alone when only SELF was selected.
pub fn self_answer(rt: &Runtime<'_>, sources: &[String], question: &str) -> CliResult<Option<String>> {
    let only_self = sources
        .iter()
        .all(|s| rt.catalog.source(s).is_ok_and(|d| d.kind == SourceKind::SelfKnowledge));
    if !only_self {
        return Ok(None);
    }
    rt.gateway.complete(question).map(Some).context(Kind::Exec, "answer")
}

/// Plain rendering used as a prediction when no template is given.
pub fn plain_answer(data: &EntitySet) -> String {
    if data.is_empty() {
        return NO_DATA.to_string();
    }
    data.records
        .iter()
        .map(|r| r.values().map(|v| v.to_plain_string()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("; ")
}
