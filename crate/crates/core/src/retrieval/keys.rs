use serde::{Deserialize, Serialize};
use tracing::debug;

use super::RetrievalError;
use crate::gateway::{GenerationSettings, ModelGateway};
use crate::graph::strip_code_fence;
use crate::prompts;

/// Target entities, relations and intent extracted from a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryKeyElements {
    pub target_entities: Vec<String>,
    pub target_relations: Vec<String>,
    pub intent: String,
}

impl QueryKeyElements {
    /// Returns `None` when every field is empty after trimming.
    pub fn new(entities: Vec<String>, relations: Vec<String>, intent: impl Into<String>) -> Option<Self> {
        let clean = |v: Vec<String>| -> Vec<String> {
            let mut out: Vec<String> = Vec::new();
            for s in v {
                let s = s.trim();
                if !s.is_empty() && !out.iter().any(|o| o == s) {
                    out.push(s.to_string());
                }
            }
            out
        };
        let key = Self {
            target_entities: clean(entities),
            target_relations: clean(relations),
            intent: intent.into().trim().to_string(),
        };
        (!key.is_empty()).then_some(key)
    }

    /// The whole query as the single target entity.
    pub fn fallback(query: &str) -> Self {
        Self {
            target_entities: vec![query.trim().to_string()],
            target_relations: Vec::new(),
            intent: String::new(),
        }
    }

    fn is_empty(&self) -> bool {
        self.target_entities.is_empty() && self.target_relations.is_empty() && self.intent.is_empty()
    }

    /// Entities, relations and intent as one deduplicated list of strings.
    pub fn key_strings(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let all = self
            .target_entities
            .iter()
            .chain(&self.target_relations)
            .map(String::as_str);
        for s in all.chain((!self.intent.is_empty()).then_some(self.intent.as_str())) {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }
}

#[derive(Deserialize)]
struct WireKeys {
    #[serde(default)]
    entities: Vec<String>,
    #[serde(default)]
    relations: Vec<String>,
    #[serde(default)]
    intent: String,
}

/// Parses `{"entities": [...], "relations": [...], "intent": "..."}`.
pub fn parse_key_elements(reply: &str) -> Option<QueryKeyElements> {
    let wire: WireKeys = serde_json::from_str(strip_code_fence(reply)).ok()?;
    QueryKeyElements::new(wire.entities, wire.relations, wire.intent)
}

/// Asks the model for the query's key elements. An unparseable or empty reply
/// falls back to [`QueryKeyElements::fallback`].
pub fn extract_key_elements(
    query: &str,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<QueryKeyElements, RetrievalError> {
    if query.trim().is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    let reply = gateway.generate(&settings.request(prompts::key_elements(query)))?;
    Ok(parse_key_elements(&reply.text).unwrap_or_else(|| {
        debug!(reply = %reply.text, "key element reply unusable, using whole query");
        QueryKeyElements::fallback(query)
    }))
}
