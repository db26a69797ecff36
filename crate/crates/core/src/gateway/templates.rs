//! Versioned prompt templates with `{Name}` holes; `{{` and `}}` are literal braces.

use std::collections::BTreeMap;
use std::fmt;

use super::GatewayError;

pub const TEMPLATE_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptName {
    ApiGeneration,
    SourceSelection,
    PostProcessing,
    Disambiguation,
    AttributeExtraction,
    /// Not the canonical contest judge prompt; a stand-in with the same verdict format.
    LlmJudge,
}

impl PromptName {
    pub const ALL: [PromptName; 6] = [
        PromptName::ApiGeneration,
        PromptName::SourceSelection,
        PromptName::PostProcessing,
        PromptName::Disambiguation,
        PromptName::AttributeExtraction,
        PromptName::LlmJudge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptName::ApiGeneration => "api_generation",
            PromptName::SourceSelection => "source_selection",
            PromptName::PostProcessing => "post_processing",
            PromptName::Disambiguation => "disambiguation",
            PromptName::AttributeExtraction => "attribute_extraction",
            PromptName::LlmJudge => "llm_judge",
        }
    }

    pub fn parse(name: &str) -> Result<Self, GatewayError> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == name)
            .ok_or_else(|| GatewayError::UnknownTemplate(name.to_string()))
    }

    pub fn body(self) -> &'static str {
        match self {
            PromptName::ApiGeneration => API_GENERATION,
            PromptName::SourceSelection => SOURCE_SELECTION,
            PromptName::PostProcessing => POST_PROCESSING,
            PromptName::Disambiguation => DISAMBIGUATION,
            PromptName::AttributeExtraction => ATTRIBUTE_EXTRACTION,
            PromptName::LlmJudge => LLM_JUDGE,
        }
    }

    /// Hole names in order of first appearance.
    pub fn holes(self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for piece in scan(self.body()) {
            if let Piece::Hole(h) = piece {
                if !out.contains(&h) {
                    out.push(h);
                }
            }
        }
        out
    }
}

impl fmt::Display for PromptName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// DSL reference bound to the `API_definition` hole.
pub const API_DEFINITION: &str = "GET(source, condition, {attr1, attr2}) [AS alias] fetches the listed attributes of entities meeting the condition. \
Conditions compare attributes with = != < <= > >= LIKE ~ and combine with AND, OR, NOT and parentheses; strings are double-quoted. \
Relational sources need table = \"name\". Knowledge-graph and document sources look entities up with search_key = \"name\". \
Chain calls as GET(...).JOIN(...).GET(...). .JOIN(left.attr op right.attr) links neighbouring GETs by comparing attributes; .JOIN(content, relation, search_key) follows a relation stated in the left entity's text to the right entity.";

const API_GENERATION: &str = "You are an agent for building a retrieval system.
### Instruction:
You need to generate an API with {Datasource_name}.
### API Definition: {API_definition}
### Datasource Schema: {Datasource_schema}
### Query:
Please refer to the instructions and generate an API for the following query directly:
Query: {Query}
Interface:";

const SOURCE_SELECTION: &str = "You are an agent for selecting the appropriate data source to answer user queries.
### Instruction:
Based on the provided query and available data sources ({Datasource_list}), you must determine the best option for obtaining the information needed.
### Source Schema Overview:{Source_description}
### Query:
Please refer to the instructions and output a most likely data source for the following query directly.
Query: {Query}
Source:";

const POST_PROCESSING: &str = "You are an agent for processing structured data.
### Instructions:
Extract useful information from the retrieved data that directly addresses the user's query.
If the task involves computation or dynamic formatting, embed expressions in {{...}} holes of a result template.
Available functions: sort_by, top, filter, map, sum, avg, min, max, len, round, num, date, join_str.
### API Definition: {API_definition}
### Output Requirements:
Complete the Return part with a result template over the list `Data`, or \"no data\" if no relevant data is found.
### Query:
Question: {query}
API: {api}
Data (Limited by maximum length): {data}
Return:";

const DISAMBIGUATION: &str = "You are an entity linking agent.
### Instruction:
The name {Entity} is ambiguous. Select the candidate most related to the query.
### Candidates:
{Candidates}
### Query:
Query: {Query}
Answer with the number of the best candidate only.
Answer:";

const ATTRIBUTE_EXTRACTION: &str = "You are an entity module extracting facts from text.
### Instruction:
Read the context and extract the value of \"{Attribute}\". Answer with the value only, or NONE if the context does not state it.
### Context:
{Context}
### Query:
Query: {Query}
Value:";

const LLM_JUDGE: &str = "You are an assistant grading answers to questions.
### Instruction:
Decide whether the prediction answers the question with the same meaning as the ground truth. Reply with exactly True or False.
### Question: {Question}
### Ground truth: {Ground_truth}
### Prediction: {Prediction}
Verdict:";

/// Value bound to a hole. Lists render comma-separated.
#[derive(Debug, Clone, PartialEq)]
pub enum Binding {
    Text(String),
    List(Vec<String>),
}

impl Binding {
    fn render(&self) -> String {
        match self {
            Binding::Text(s) => s.clone(),
            Binding::List(items) => items.join(", "),
        }
    }
}

impl From<&str> for Binding {
    fn from(s: &str) -> Self {
        Binding::Text(s.to_string())
    }
}

impl From<String> for Binding {
    fn from(s: String) -> Self {
        Binding::Text(s)
    }
}

impl From<Vec<String>> for Binding {
    fn from(v: Vec<String>) -> Self {
        Binding::List(v)
    }
}

pub type Bindings = BTreeMap<String, Binding>;

/// Convenience builder: `bindings([("Query", "...".into())])`.
pub fn bindings<const N: usize>(pairs: [(&str, Binding); N]) -> Bindings {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

enum Piece<'a> {
    Text(&'a str),
    Hole(&'a str),
}

fn scan(body: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let mut i = 0;
    let mut start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&body[start..i + 1]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&body[start..i + 1]));
                i += 2;
                start = i;
            }
            b'{' => {
                let name_end = body[i + 1..]
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .map(|o| i + 1 + o);
                match name_end {
                    Some(end) if end > i + 1 && bytes[end] == b'}' => {
                        out.push(Piece::Text(&body[start..i]));
                        out.push(Piece::Hole(&body[i + 1..end]));
                        i = end + 1;
                        start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    out
}

/// Fill every hole of a named template. Extra bindings are ignored.
pub fn render_prompt(name: &str, bound: &Bindings) -> Result<String, GatewayError> {
    render_template(PromptName::parse(name)?, bound)
}

pub fn render_template(name: PromptName, bound: &Bindings) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(name.body().len() + 256);
    for piece in scan(name.body()) {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Hole(h) => {
                let value = bound.get(h).ok_or_else(|| GatewayError::MissingBinding {
                    template: name.as_str().to_string(),
                    hole: h.to_string(),
                })?;
                out.push_str(&value.render());
            }
        }
    }
    Ok(out)
}
