use std::fmt;

use serde::Serialize;

use super::Cardinality;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceUpdate {
    pub neighbor: String,
    pub old: Cardinality,
    pub new: Cardinality,
}

/// One iteration of the execution loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    /// Label of the popped node; merged nodes are labelled `g1+g2`.
    pub popped: String,
    pub key: Cardinality,
    /// Node it was joined with, if any.
    pub partner: Option<String>,
    /// Rows in the result of this step.
    pub rows: usize,
    pub updates: Vec<TraceUpdate>,
    /// Queue contents after the pop, ascending.
    pub queue: Vec<(String, Cardinality)>,
}

impl TraceStep {
    pub(crate) fn new(popped: String, key: Cardinality, queue: Vec<(String, Cardinality)>) -> Self {
        TraceStep {
            popped,
            key,
            partner: None,
            rows: 0,
            updates: Vec::new(),
            queue,
        }
    }

    /// `POP g2 card=1 join=g1 | EXEC rows=1 | UPDATE neighbor=g3 card=5`
    pub fn render_line(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "POP {} card={}", self.popped, self.key)?;
        if let Some(p) = &self.partner {
            write!(f, " join={p}")?;
        }
        write!(f, " | EXEC rows={}", self.rows)?;
        for u in &self.updates {
            write!(f, " | UPDATE neighbor={} card={}", u.neighbor, u.new)?;
        }
        Ok(())
    }
}
