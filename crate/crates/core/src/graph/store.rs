//! JSON persistence for knowledge graphs.
//!
//! ```text
//! {"schema_version": 1, "entities": [...], "relations": [...], "triples": [...]}
//! ```
//!
//! Entities and relations are written sorted by id and triples in graph
//! order, so the same graph always serializes to the same bytes. The
//! adjacency index is rebuilt on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{Entity, KnowledgeGraph, Relation, Triple};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphStoreError {
    #[error("graph file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("graph file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("graph schema version {found:?} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: Option<u64>, expected: u32 },
    #[error("graph file is inconsistent: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    schema_version: u32,
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    triples: Vec<Triple>,
}

pub fn graph_to_json(graph: &KnowledgeGraph) -> String {
    let (entities, relations, triples) = graph.clone().into_parts();
    let doc = GraphDocument {
        schema_version: GRAPH_SCHEMA_VERSION,
        entities,
        relations,
        triples,
    };
    serde_json::to_string_pretty(&doc).expect("graph document serializes")
}

pub fn graph_from_json(json: &str) -> Result<KnowledgeGraph, GraphStoreError> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let version = value.get("schema_version").and_then(serde_json::Value::as_u64);
    if version != Some(u64::from(GRAPH_SCHEMA_VERSION)) {
        return Err(GraphStoreError::SchemaVersionMismatch {
            found: version,
            expected: GRAPH_SCHEMA_VERSION,
        });
    }
    let doc: GraphDocument = serde_json::from_value(value)?;
    KnowledgeGraph::from_parts(doc.entities, doc.relations, doc.triples).map_err(GraphStoreError::Invalid)
}

pub fn save_graph(graph: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<(), GraphStoreError> {
    fs::write(path, graph_to_json(graph) + "\n")?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<KnowledgeGraph, GraphStoreError> {
    graph_from_json(&fs::read_to_string(path)?)
}
