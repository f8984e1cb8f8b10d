//! Knowledge-graph construction: segment the retrieved content, extract
//! triples per segment with the generative model, and fold them into a graph.

mod extract;
mod model;
mod segment;
mod store;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::gateway::{GatewayError, GenerationSettings, ModelGateway};

pub(crate) use extract::strip_code_fence;
pub use extract::{extract_triples, parse_triples, ExtractedTriple};
pub use model::{build_graph, Direction, Entity, GraphStats, KnowledgeGraph, Relation, Triple};
pub use segment::{segment, Segment, DEFAULT_MAX_SEGMENT_TOKENS};
pub use store::{graph_from_json, graph_to_json, load_graph, save_graph, GraphStoreError, GRAPH_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("content is empty")]
    EmptyContent,
    #[error("max_segment_tokens must be at least 1")]
    InvalidSegmentCap,
    #[error("segment {segment}: extraction reply violates the triple schema: {message}")]
    ExtractionParse { segment: usize, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Everything produced while building one graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Construction {
    pub segments: Vec<Segment>,
    pub extracted: Vec<ExtractedTriple>,
    /// Segments whose extraction reply could not be parsed even after repair.
    pub skipped_segments: Vec<usize>,
    #[serde(skip)]
    pub graph: KnowledgeGraph,
}

/// Segments `content`, extracts triples from all segments concurrently and
/// builds the graph. Unparseable segments are skipped with a warning; gateway
/// failures abort.
pub fn construct_graph(
    content: &str,
    max_segment_tokens: usize,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
) -> Result<Construction, GraphError> {
    let segments = segment(content, max_segment_tokens)?;
    let results: Vec<Result<Vec<ExtractedTriple>, GraphError>> = segments
        .par_iter()
        .map(|s| extract_triples(s, gateway, settings))
        .collect();

    let mut extracted = Vec::new();
    let mut skipped_segments = Vec::new();
    for (seg, result) in segments.iter().zip(results) {
        match result {
            Ok(triples) => extracted.extend(triples),
            Err(GraphError::ExtractionParse { segment, message }) => {
                warn!(segment, %message, "skipping segment with unparseable extraction");
                skipped_segments.push(seg.id);
            }
            Err(e) => return Err(e),
        }
    }
    let graph = build_graph(&extracted);
    Ok(Construction {
        segments,
        extracted,
        skipped_segments,
        graph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;

    #[test]
    fn skips_unparseable_segment_after_repair() {
        let script = r#"
{"kind":"generate","match":{"regex":"(?s)^Extract.*Alpha"},"response":{"text":"[{\"head\":\"Alpha\",\"relation\":\"R\",\"tail\":\"Beta\"}]"}}
{"kind":"generate","match":{"regex":"(?s)^Extract.*Gamma"},"response":{"text":"not json"}}
{"kind":"generate","match":{"regex":"(?s)^The reply below.*Gamma"},"response":{"text":"still not json"}}
"#;
        let mock = MockBackend::from_script(script).unwrap();
        let c = construct_graph(
            "Alpha meets Beta. Gamma stands alone.",
            3,
            &mock,
            &GenerationSettings::default(),
        )
        .unwrap();
        assert_eq!(c.segments.len(), 2);
        assert_eq!(c.skipped_segments, vec![1]);
        assert_eq!(c.graph.stats().triples, 1);
    }

    #[test]
    fn repair_round_trip_recovers() {
        let script = r#"
{"kind":"generate","match":{"regex":"(?s)^Extract"},"response":{"text":"Sure! [oops"}}
{"kind":"generate","match":{"regex":"(?s)^The reply below"},"response":{"text":"[]"}}
"#;
        let mock = MockBackend::from_script(script).unwrap();
        let c = construct_graph("Nothing here.", 10, &mock, &GenerationSettings::default()).unwrap();
        assert!(c.skipped_segments.is_empty());
        assert!(c.graph.is_empty());
    }

    #[test]
    fn gateway_failure_aborts() {
        let mock = MockBackend::from_script("").unwrap();
        let err = construct_graph("Some text.", 10, &mock, &GenerationSettings::default()).unwrap_err();
        assert!(matches!(err, GraphError::Gateway(GatewayError::ScriptMiss { .. })));
    }
}
