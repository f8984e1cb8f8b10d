use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::keys::QueryKeyElements;
use super::RetrievalError;
use crate::gateway::{cosine, EmbeddingCache};
use crate::graph::KnowledgeGraph;

/// The top-k entities and relations of a graph by similarity to the query's
/// key elements. Both lists are sorted by score descending, ties broken by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportantSets {
    pub entities: Vec<(String, f64)>,
    pub relations: Vec<(String, f64)>,
    pub k: usize,
}

impl ImportantSets {
    pub fn has_entity(&self, id: &str) -> bool {
        self.entities.iter().any(|(e, _)| e == id)
    }

    pub fn has_relation(&self, id: &str) -> bool {
        self.relations.iter().any(|(r, _)| r == id)
    }
}

/// Highest cosine similarity between `candidate` and any key string.
pub fn similarity(candidate: &str, key: &QueryKeyElements, cache: &EmbeddingCache) -> Result<f64, RetrievalError> {
    if candidate.is_empty() {
        return Err(RetrievalError::EmptyCandidate);
    }
    let keys = key.key_strings();
    let vectors = cache.get_many(&keys)?;
    let cand = cache.get(candidate)?;
    Ok(max_cosine(&cand, &vectors))
}

fn max_cosine(candidate: &[f64], keys: &[std::sync::Arc<[f64]>]) -> f64 {
    keys.iter().map(|k| cosine(candidate, k)).fold(-1.0, f64::max)
}

fn rank(mut scored: Vec<(String, f64)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        other => other,
    });
    scored.truncate(k);
    scored
}

/// Ranks entities (by display name) and relations (by name) against the key
/// elements and keeps the top `k` of each.
pub fn top_k_important(
    graph: &KnowledgeGraph,
    key: &QueryKeyElements,
    k: usize,
    cache: &EmbeddingCache,
) -> Result<ImportantSets, RetrievalError> {
    if graph.is_empty() {
        return Ok(ImportantSets {
            k,
            ..Default::default()
        });
    }
    let keys = cache.get_many(&key.key_strings())?;

    let entity_names: Vec<&str> = graph.entities().map(|e| e.name.as_str()).collect();
    let entity_vecs = cache.get_many(&entity_names)?;
    let entities = graph
        .entities()
        .zip(&entity_vecs)
        .map(|(e, v)| (e.id.clone(), max_cosine(v, &keys)))
        .collect();

    let relation_names: Vec<&str> = graph.relations().map(|r| r.name.as_str()).collect();
    let relation_vecs = cache.get_many(&relation_names)?;
    let relations = graph
        .relations()
        .zip(&relation_vecs)
        .map(|(r, v)| (r.id.clone(), max_cosine(v, &keys)))
        .collect();

    Ok(ImportantSets {
        entities: rank(entities, k),
        relations: rank(relations, k),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockBackend;
    use crate::graph::{build_graph, ExtractedTriple};

    const AXES: &str = r#"
{"kind":"embed","match":"north","response":{"vector":[1.0,0.0,0.0]}}
{"kind":"embed","match":"east","response":{"vector":[0.0,1.0,0.0]}}
{"kind":"embed","match":"up","response":{"vector":[0.0,0.0,1.0]}}
{"kind":"embed","match":"northeast","response":{"vector":[0.6,0.8,0.0]}}
"#;

    fn key(entities: &[&str]) -> QueryKeyElements {
        QueryKeyElements::new(entities.iter().map(|s| s.to_string()).collect(), vec![], "").unwrap()
    }

    #[test]
    fn identical_text_scores_one() {
        let mock = MockBackend::from_script("").unwrap();
        let cache = EmbeddingCache::new(&mock);
        let s = similarity("Ciudad Deportiva", &key(&["Ciudad Deportiva", "owner"]), &cache).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_and_max_of_pairs() {
        let mock = MockBackend::from_script(AXES).unwrap();
        let cache = EmbeddingCache::new(&mock);
        assert!(similarity("up", &key(&["north", "east"]), &cache).unwrap().abs() < 1e-9);
        // cos(northeast, north) = 0.6, cos(northeast, east) = 0.8
        let s = similarity("northeast", &key(&["north", "east"]), &cache).unwrap();
        let direct = [0.6f64, 0.8].into_iter().fold(f64::MIN, f64::max);
        assert!((s - direct).abs() < 1e-9);
        assert!(matches!(
            similarity("", &key(&["north"]), &cache),
            Err(RetrievalError::EmptyCandidate)
        ));
    }

    fn triple(h: &str, r: &str, t: &str) -> ExtractedTriple {
        ExtractedTriple {
            head: h.into(),
            relation: r.into(),
            tail: t.into(),
            head_desc: String::new(),
            rel_desc: String::new(),
            tail_desc: String::new(),
            evidence: String::new(),
            source_segment: 0,
        }
    }

    #[test]
    fn k_exceeding_population_returns_all_sorted() {
        let mock = MockBackend::from_script(AXES).unwrap();
        let cache = EmbeddingCache::new(&mock);
        let g = build_graph(&[triple("north", "up", "east"), triple("northeast", "up", "east")]);
        let imp = top_k_important(&g, &key(&["north"]), 10, &cache).unwrap();
        let ids: Vec<_> = imp.entities.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, ["north", "northeast", "east"]);
        assert_eq!(imp.relations.len(), 1);
        let top1 = top_k_important(&g, &key(&["north"]), 1, &cache).unwrap();
        assert_eq!(top1.entities.len(), 1);
    }

    #[test]
    fn ties_broken_by_id() {
        let script = r#"
{"kind":"embed","match":"q","response":{"vector":[1.0,0.0]}}
{"kind":"embed","match":"bravo","response":{"vector":[0.5,0.5]}}
{"kind":"embed","match":"alpha","response":{"vector":[0.5,0.5]}}
{"kind":"embed","match":"r","response":{"vector":[0.0,1.0]}}
"#;
        let mock = MockBackend::from_script(script).unwrap();
        let cache = EmbeddingCache::new(&mock);
        let g = build_graph(&[triple("bravo", "r", "alpha")]);
        let imp = top_k_important(&g, &key(&["q"]), 10, &cache).unwrap();
        assert_eq!(imp.entities[0].0, "alpha");
        assert_eq!(imp.entities[0].1, imp.entities[1].1);
    }

    #[test]
    fn empty_graph_gives_empty_sets() {
        let mock = MockBackend::from_script("").unwrap();
        let cache = EmbeddingCache::new(&mock);
        let imp = top_k_important(&KnowledgeGraph::default(), &key(&["x"]), 10, &cache).unwrap();
        assert!(imp.entities.is_empty() && imp.relations.is_empty());
    }
}
