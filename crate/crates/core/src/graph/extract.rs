use serde::{Deserialize, Serialize};
use tracing::debug;

use super::segment::Segment;
use super::GraphError;
use crate::gateway::{GenerationSettings, ModelGateway};
use crate::prompts;

/// One triple as returned by the extraction model, before normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub head_desc: String,
    pub rel_desc: String,
    pub tail_desc: String,
    pub evidence: String,
    pub source_segment: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTriple {
    head: String,
    relation: String,
    tail: String,
    #[serde(default)]
    head_desc: String,
    #[serde(default)]
    rel_desc: String,
    #[serde(default)]
    tail_desc: String,
    #[serde(default)]
    evidence: String,
}

/// Drops a surrounding markdown code fence, if any.
pub(crate) fn strip_code_fence(reply: &str) -> &str {
    let t = reply.trim();
    let Some(inner) = t.strip_prefix("```") else { return t };
    let inner = inner.split_once('\n').map_or("", |(_, rest)| rest);
    inner.trim_end().strip_suffix("```").unwrap_or(inner).trim()
}

/// Parses the extraction reply format: a JSON array of
/// `{head, relation, tail, head_desc, rel_desc, tail_desc, evidence}`.
pub fn parse_triples(reply: &str, segment_id: usize) -> Result<Vec<ExtractedTriple>, String> {
    let wire: Vec<WireTriple> = serde_json::from_str(strip_code_fence(reply)).map_err(|e| e.to_string())?;
    wire.into_iter()
        .enumerate()
        .map(|(i, w)| {
            if w.head.trim().is_empty() || w.relation.trim().is_empty() || w.tail.trim().is_empty() {
                return Err(format!("element {i}: head, relation and tail must be non-empty"));
            }
            Ok(ExtractedTriple {
                head: w.head,
                relation: w.relation,
                tail: w.tail,
                head_desc: w.head_desc,
                rel_desc: w.rel_desc,
                tail_desc: w.tail_desc,
                evidence: w.evidence,
                source_segment: segment_id,
            })
        })
        .collect()
}

/// Asks the model for the triples in one segment. A reply that does not parse
/// gets one repair round-trip before the segment is reported as unparseable.
pub fn extract_triples(
    segment: &Segment,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<Vec<ExtractedTriple>, GraphError> {
    let reply = gateway.generate(&settings.request(prompts::extract_triples(&segment.text)))?;
    let error = match parse_triples(&reply.text, segment.id) {
        Ok(triples) => return Ok(triples),
        Err(e) => e,
    };
    debug!(segment = segment.id, %error, "extraction reply unparseable, asking for repair");
    let repaired = gateway.generate(&settings.request(prompts::repair_triples(&segment.text, &reply.text, &error)))?;
    parse_triples(&repaired.text, segment.id).map_err(|message| GraphError::ExtractionParse {
        segment: segment.id,
        message,
    })
}
