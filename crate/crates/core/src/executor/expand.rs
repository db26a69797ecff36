//! Turning an executed join side into a filter for the other side's GET.

use std::collections::{BTreeSet, HashMap};

use crate::chain::{Condition, JoinEdge};
use crate::gateway::Gateway;
use crate::value::{CmpOp, Value};

use super::{EntitySet, ExecError};

/// What a bound result contributes to the next GET.
#[derive(Debug, Clone, PartialEq)]
pub enum JoinExpansion {
    /// Conjoin this with the GET's own condition.
    Filter(Condition),
    /// No bound value can match; the join is empty without running the GET.
    Empty,
    /// The operator cannot be pushed down (`LIKE`, `~`); the GET runs unfiltered.
    Unfiltered,
}

pub(crate) type ExtractionCache = HashMap<(String, String), Option<String>>;

/// Distinct non-null values of `key` across `set`, in order of first occurrence.
pub(crate) fn distinct_values(set: &EntitySet, key: &str) -> Result<Vec<Value>, ExecError> {
    if !set.records.is_empty() && set.records.iter().all(|r| !r.contains_key(key)) {
        return Err(ExecError::MissingJoinAttribute(key.to_string()));
    }
    let mut seen = BTreeSet::new();
    Ok(set
        .records
        .iter()
        .filter_map(|r| r.get(key))
        .filter(|v| !v.is_null() && seen.insert((*v).clone()))
        .cloned()
        .collect())
}

pub(crate) fn cached_extract(
    gateway: &dyn Gateway,
    query: &str,
    text: &str,
    relation: &str,
    cache: &mut ExtractionCache,
) -> Result<Option<String>, ExecError> {
    let k = (text.to_string(), relation.to_string());
    if let Some(hit) = cache.get(&k) {
        return Ok(hit.clone());
    }
    let got = gateway.extract_relation(text, relation, query)?;
    cache.insert(k, got.clone());
    Ok(got)
}

/// Filter for the right node of `edge`, given the executed left side.
///
/// `bound_key` is the namespaced key of the edge's left attribute in `bound`. Relational edges
/// give `right_attr flip(op) v` for every distinct bound `v`, OR-ed. Semantic edges ask the
/// gateway for the related entity of each bound value and filter `right_attr = entity`.
pub fn expand_join_condition(
    bound: &EntitySet,
    bound_key: &str,
    edge: &JoinEdge,
    target_alias: &str,
    gateway: &dyn Gateway,
    query: &str,
    max_fanout: usize,
) -> Result<JoinExpansion, ExecError> {
    expand_with_cache(bound, bound_key, edge, target_alias, gateway, query, max_fanout, &mut HashMap::new())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn expand_with_cache(
    bound: &EntitySet,
    bound_key: &str,
    edge: &JoinEdge,
    target_alias: &str,
    gateway: &dyn Gateway,
    query: &str,
    max_fanout: usize,
    cache: &mut ExtractionCache,
) -> Result<JoinExpansion, ExecError> {
    let values = distinct_values(bound, bound_key)?;
    let fanout = |n: usize| {
        if n > max_fanout {
            Err(ExecError::JoinFanoutExceeded {
                alias: target_alias.to_string(),
                distinct: n,
                max: max_fanout,
            })
        } else {
            Ok(())
        }
    };
    match edge {
        JoinEdge::Relational { op, right_attr, .. } => {
            if values.is_empty() {
                return Ok(JoinExpansion::Empty);
            }
            fanout(values.len())?;
            let Some(flipped) = op.flipped() else {
                return Ok(JoinExpansion::Unfiltered);
            };
            Ok(JoinExpansion::Filter(Condition::or(
                values.into_iter().map(|v| Condition::cmp(right_attr.clone(), flipped, v)).collect(),
            )))
        }
        JoinEdge::SemanticTriple {
            relation, right_attr, ..
        } => {
            if values.is_empty() {
                return Ok(JoinExpansion::Empty);
            }
            let mut found: Vec<String> = Vec::new();
            for v in &values {
                if let Some(x) = cached_extract(gateway, query, &v.to_plain_string(), relation, cache)? {
                    if !found.contains(&x) {
                        found.push(x);
                    }
                }
            }
            if found.is_empty() {
                return Err(ExecError::ExtractionFailed(relation.clone()));
            }
            fanout(found.len())?;
            Ok(JoinExpansion::Filter(Condition::or(
                found
                    .into_iter()
                    .map(|x| Condition::cmp(right_attr.clone(), CmpOp::Eq, Value::Text(x)))
                    .collect(),
            )))
        }
    }
}
