//! Query-aware path retrieval over a knowledge graph.
//!
//! One retrieval round extracts the query's key elements, picks the top-k
//! entities and relations by embedding similarity, enumerates the one- and
//! two-edge paths leaving each important entity, scores them by weighted
//! coverage of the important sets, keeps the top `paths_k` and renders each
//! one as model context.

mod context;
mod important;
mod keys;
mod paths;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{EmbeddingCache, GatewayError, GenerationSettings, ModelGateway};
use crate::graph::KnowledgeGraph;

pub use context::contextualize;
pub use important::{similarity, top_k_important, ImportantSets};
pub use keys::{extract_key_elements, parse_key_elements, QueryKeyElements};
pub use paths::{enumerate_paths, path_order, score_path, select_super_paths, PathEdge, ReasoningPath};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("similarity candidate is empty")]
    EmptyCandidate,
    #[error("path references {0} which is not in the graph")]
    DanglingReference(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Weight of important-entity coverage.
    pub alpha: f64,
    /// Weight of important-relation coverage.
    pub beta: f64,
    /// How many entities and relations count as important.
    pub k_similar: usize,
    /// How many paths survive selection.
    pub paths_k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
            k_similar: 10,
            paths_k: 10,
        }
    }
}

impl RetrievalConfig {
    /// Checks bounds, returning `(field, message)` for the first violation.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(("alpha", format!("must be a finite value >= 0, got {}", self.alpha)));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(("beta", format!("must be a finite value >= 0, got {}", self.beta)));
        }
        if self.alpha + self.beta <= 0.0 {
            return Err(("alpha", "alpha + beta must be positive".into()));
        }
        if self.k_similar == 0 {
            return Err(("k_similar", "must be at least 1".into()));
        }
        if self.paths_k == 0 {
            return Err(("paths_k", "must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of one retrieval round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub key: QueryKeyElements,
    pub important: ImportantSets,
    pub init_count: usize,
    /// Selected paths, best first, each with `rendered_context` filled in.
    pub super_paths: Vec<ReasoningPath>,
}

pub fn retrieve(
    query: &str,
    graph: &KnowledgeGraph,
    gateway: &dyn ModelGateway,
    settings: &GenerationSettings,
    cfg: &RetrievalConfig,
    cache: &EmbeddingCache,
) -> Result<Retrieval, RetrievalError> {
    let key = extract_key_elements(query, gateway, settings)?;
    retrieve_with_key(key, graph, cfg, cache)
}

/// Retrieval from already-extracted key elements.
pub fn retrieve_with_key(
    key: QueryKeyElements,
    graph: &KnowledgeGraph,
    cfg: &RetrievalConfig,
    cache: &EmbeddingCache,
) -> Result<Retrieval, RetrievalError> {
    let important = top_k_important(graph, &key, cfg.k_similar, cache)?;
    let mut init = enumerate_paths(graph, &important);
    for p in &mut init {
        p.score = score_path(p, &important, cfg);
    }
    let init_count = init.len();
    let mut super_paths = select_super_paths(init, cfg.paths_k);
    for p in &mut super_paths {
        p.rendered_context = Some(contextualize(p, graph, &important)?);
    }
    Ok(Retrieval {
        key,
        important,
        init_count,
        super_paths,
    })
}
