//! Answer scoring: stemmed-token containment and a model-judged verdict.

pub mod porter;

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{bindings, render_template, Gateway, GatewayError, PromptName};

pub use porter::stem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalKitError {
    #[error("judge answered {0:?}, expected True or False")]
    UnparseableVerdict(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Lowercased alphanumeric runs, stemmed.
pub fn stemmed_tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(stem)
        .collect()
}

/// 1 when every stemmed ground-truth token occurs in the prediction, else 0.
pub fn stem_accuracy(prediction: &str, ground_truth: &str) -> u8 {
    let pred = stemmed_tokens(prediction);
    u8::from(stemmed_tokens(ground_truth).is_subset(&pred))
}

/// Strict verdict: the reply, trimmed of whitespace, quotes and a final period, must be
/// `True` or `False` (any case).
pub fn parse_verdict(reply: &str) -> Result<bool, EvalKitError> {
    let t = reply.trim().trim_matches(|c| c == '"' || c == '\'' || c == '`').trim_end_matches('.').trim();
    match t.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(EvalKitError::UnparseableVerdict(reply.to_string())),
    }
}

pub fn llm_judge(question: &str, ground_truth: &str, prediction: &str, gateway: &dyn Gateway) -> Result<bool, EvalKitError> {
    let prompt = render_template(
        PromptName::LlmJudge,
        &bindings([
            ("Question", question.into()),
            ("Ground_truth", ground_truth.into()),
            ("Prediction", prediction.into()),
        ]),
    )?;
    parse_verdict(&gateway.complete(&prompt)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub question: String,
    pub ground_truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    /// Chain to run when there is no prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    /// Result template applied to the chain's output.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

pub fn read_eval_set<R: BufRead>(reader: R) -> Result<Vec<EvalItem>, EvalKitError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let malformed = |message: String| EvalKitError::Malformed { line: i + 1, message };
        let line = line.map_err(|e| malformed(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockGateway;

    #[test]
    fn stem_accuracy_cases() {
        assert_eq!(stem_accuracy("Its parent is Google.", "Google"), 1);
        assert_eq!(stem_accuracy("London", "Paris"), 0);
        assert_eq!(stem_accuracy("anything", ""), 1);
        // runs/running share a stem; fastest and fast do not
        assert_eq!(stem_accuracy("he runs fastest", "running fast"), 0);
        assert_eq!(stem_accuracy("he runs fast", "running fast"), 1);
    }

    #[test]
    fn judge() {
        let gw = MockGateway::lenient().with_rule("### Prediction: yes", "True").with_rule("### Prediction: no", "False.");
        assert!(llm_judge("q", "gt", "yes", &gw).unwrap());
        assert!(!llm_judge("q", "gt", "no", &gw).unwrap());
        let gw = MockGateway::lenient().with_rule("Prediction", "maybe");
        assert!(matches!(
            llm_judge("q", "gt", "x", &gw),
            Err(EvalKitError::UnparseableVerdict(_))
        ));
        assert!(parse_verdict(" 'TRUE' ").unwrap());
    }

    #[test]
    fn eval_set() {
        let text = "{\"question\":\"q\",\"ground_truth\":\"a\"}\n{\"question\":\"q2\",\"ground_truth\":\"b\",\"prediction\":\"b\"}\n";
        let items = read_eval_set(text.as_bytes()).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[1].prediction.as_deref(), Some("b"));
        assert!(read_eval_set("{\"question\":1}".as_bytes()).is_err());
    }
}
