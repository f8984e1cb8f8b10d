use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::important::ImportantSets;
use super::RetrievalConfig;
use crate::graph::{Direction, KnowledgeGraph, Triple};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathEdge {
    pub relation: String,
    pub triple: usize,
    pub direction: Direction,
}

/// A simple path of one or two edges through the graph, starting at an
/// important entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub nodes: Vec<String>,
    pub edges: Vec<PathEdge>,
    pub score: f64,
    pub rendered_context: Option<String>,
}

fn far_end(t: &Triple, dir: Direction) -> &str {
    match dir {
        Direction::Forward => &t.tail,
        Direction::Backward => &t.head,
    }
}

impl ReasoningPath {
    pub fn start(&self) -> &str {
        &self.nodes[0]
    }

    /// Checks the path shape and that every hop follows its triple in the
    /// recorded direction.
    pub fn validate(&self, graph: &KnowledgeGraph) -> Result<(), String> {
        if self.edges.is_empty() || self.edges.len() > 2 || self.nodes.len() != self.edges.len() + 1 {
            return Err(format!(
                "bad shape: {} nodes, {} edges",
                self.nodes.len(),
                self.edges.len()
            ));
        }
        if self.nodes.iter().collect::<HashSet<_>>().len() != self.nodes.len() {
            return Err("path revisits a node".into());
        }
        for (i, e) in self.edges.iter().enumerate() {
            let t = graph
                .triples()
                .get(e.triple)
                .ok_or_else(|| format!("edge {i}: no triple {}", e.triple))?;
            let (from, to) = match e.direction {
                Direction::Forward => (&t.head, &t.tail),
                Direction::Backward => (&t.tail, &t.head),
            };
            if *from != self.nodes[i] || *to != self.nodes[i + 1] || t.relation != e.relation {
                return Err(format!("edge {i} does not match triple {}", e.triple));
            }
        }
        Ok(())
    }

    fn identity(&self) -> (Vec<String>, Vec<PathEdge>) {
        (self.nodes.clone(), self.edges.clone())
    }
}

/// All simple paths of one and two edges leaving each important entity,
/// walking triples in either direction. Output is duplicate-free and ordered
/// by start entity (importance order), then adjacency order.
pub fn enumerate_paths(graph: &KnowledgeGraph, important: &ImportantSets) -> Vec<ReasoningPath> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |p: ReasoningPath, out: &mut Vec<ReasoningPath>| {
        if seen.insert(p.identity()) {
            out.push(p);
        }
    };

    for (start, _) in &important.entities {
        for &(i, d1) in graph.incident(start) {
            let t1 = &graph.triples()[i];
            let mid = far_end(t1, d1);
            if mid == start {
                continue;
            }
            let e1 = PathEdge {
                relation: t1.relation.clone(),
                triple: i,
                direction: d1,
            };
            let one = ReasoningPath {
                nodes: vec![start.clone(), mid.to_string()],
                edges: vec![e1.clone()],
                score: 0.0,
                rendered_context: None,
            };
            push(one, &mut out);

            for &(j, d2) in graph.incident(mid) {
                let t2 = &graph.triples()[j];
                let end = far_end(t2, d2);
                if end == start || end == mid {
                    continue;
                }
                let two = ReasoningPath {
                    nodes: vec![start.clone(), mid.to_string(), end.to_string()],
                    edges: vec![
                        e1.clone(),
                        PathEdge {
                            relation: t2.relation.clone(),
                            triple: j,
                            direction: d2,
                        },
                    ],
                    score: 0.0,
                    rendered_context: None,
                };
                push(two, &mut out);
            }
        }
    }
    out
}

/// Weighted coverage of the important entities and relations by the path.
/// A term whose important set is empty contributes 0.
pub fn score_path(path: &ReasoningPath, important: &ImportantSets, cfg: &RetrievalConfig) -> f64 {
    let entities: BTreeSet<&str> = path.nodes.iter().map(String::as_str).collect();
    let relations: BTreeSet<&str> = path.edges.iter().map(|e| e.relation.as_str()).collect();
    let coverage = |hits: usize, total: usize| if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    let entity_hits = entities.iter().filter(|e| important.has_entity(e)).count();
    let relation_hits = relations.iter().filter(|r| important.has_relation(r)).count();
    cfg.alpha * coverage(entity_hits, important.entities.len())
        + cfg.beta * coverage(relation_hits, important.relations.len())
}

/// Ranking used for path selection: score descending, then fewer edges, then
/// node sequence, then edge sequence.
pub fn path_order(a: &ReasoningPath, b: &ReasoningPath) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.edges.len().cmp(&b.edges.len()))
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| a.edges.cmp(&b.edges))
}

/// The `paths_k` best paths under [`path_order`].
pub fn select_super_paths(mut paths: Vec<ReasoningPath>, paths_k: usize) -> Vec<ReasoningPath> {
    paths.sort_by(path_order);
    paths.truncate(paths_k);
    paths
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::graph::{build_graph, ExtractedTriple};

    fn graph(edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
        let x: Vec<_> = edges
            .iter()
            .map(|(h, r, t)| ExtractedTriple {
                head: h.to_string(),
                relation: r.to_string(),
                tail: t.to_string(),
                head_desc: String::new(),
                rel_desc: String::new(),
                tail_desc: String::new(),
                evidence: String::new(),
                source_segment: 0,
            })
            .collect();
        build_graph(&x)
    }

    fn imp(entities: &[&str], relations: &[&str]) -> ImportantSets {
        ImportantSets {
            entities: entities.iter().map(|e| (e.to_string(), 1.0)).collect(),
            relations: relations.iter().map(|r| (r.to_string(), 1.0)).collect(),
            k: 10,
        }
    }

    fn node_seqs(paths: &[ReasoningPath]) -> Vec<String> {
        paths.iter().map(|p| p.nodes.join("-")).collect()
    }

    #[test]
    fn star_graph_has_no_two_hop_paths_from_centre() {
        let g = graph(&[("a", "r", "b"), ("a", "r", "c")]);
        let paths = enumerate_paths(&g, &imp(&["a"], &[]));
        assert_eq!(node_seqs(&paths), ["a-b", "a-c"]);
    }

    #[test]
    fn chain_walks_both_directions() {
        let g = graph(&[("a", "r", "b"), ("b", "s", "c")]);
        let paths = enumerate_paths(&g, &imp(&["a"], &[]));
        assert_eq!(node_seqs(&paths), ["a-b", "a-b-c"]);
        let from_c = enumerate_paths(&g, &imp(&["c"], &[]));
        assert_eq!(node_seqs(&from_c), ["c-b", "c-b-a"]);
        assert!(from_c.iter().all(|p| p.edges[0].direction == Direction::Backward));
        for p in paths.iter().chain(&from_c) {
            p.validate(&g).unwrap();
        }
    }

    #[test]
    fn scoring_examples() {
        let cfg = RetrievalConfig::default();
        let g = graph(&[("a", "r", "b"), ("b", "s", "c")]);
        let full = enumerate_paths(&g, &imp(&["a"], &[])).pop().unwrap();
        assert_eq!(score_path(&full, &imp(&["a", "b", "c"], &["r", "s"]), &cfg), 1.0);
        assert_eq!(score_path(&full, &imp(&["x"], &["y"]), &cfg), 0.0);
        // 2 of 4 entities, 1 of 2 relations
        let s = score_path(&full, &imp(&["a", "b", "x", "y"], &["r", "q"]), &cfg);
        assert!((s - 0.5).abs() < 1e-12);
        // empty relation set contributes nothing
        assert_eq!(score_path(&full, &imp(&["a"], &[]), &cfg), 0.5);
    }

    fn path(nodes: &[&str], score: f64) -> ReasoningPath {
        ReasoningPath {
            nodes: nodes.iter().map(|s| s.to_string()).collect(),
            edges: (1..nodes.len())
                .map(|i| PathEdge {
                    relation: "r".into(),
                    triple: i,
                    direction: Direction::Forward,
                })
                .collect(),
            score,
            rendered_context: None,
        }
    }

    #[test]
    fn selection_tie_breaks() {
        let ps = vec![
            path(&["b", "c", "d"], 0.5),
            path(&["z", "y"], 0.5),
            path(&["a", "c", "d"], 0.5),
            path(&["q", "r"], 0.9),
        ];
        let sel = select_super_paths(ps.clone(), 10);
        assert_eq!(node_seqs(&sel), ["q-r", "z-y", "a-c-d", "b-c-d"]);
        assert_eq!(select_super_paths(ps, 2).len(), 2);
    }

    proptest! {
        #[test]
        fn score_bounds_and_scale_invariance(
            edges in prop::collection::vec((0u8..8, 0u8..3, 0u8..8), 1..20),
            n_imp in 1usize..6,
            alpha in 0.0f64..3.0,
            beta in 0.0f64..3.0,
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(alpha + beta > 0.0);
            let names: Vec<(String, String, String)> =
                edges.iter().map(|(h, r, t)| (format!("n{h}"), format!("r{r}"), format!("n{t}"))).collect();
            let refs: Vec<(&str, &str, &str)> = names.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())).collect();
            let g = graph(&refs);
            let ents: Vec<String> = g.entities().take(n_imp).map(|e| e.id.clone()).collect();
            let rels: Vec<String> = g.relations().take(2).map(|r| r.id.clone()).collect();
            let important = ImportantSets {
                entities: ents.iter().map(|e| (e.clone(), 0.0)).collect(),
                relations: rels.iter().map(|r| (r.clone(), 0.0)).collect(),
                k: 10,
            };
            let cfg = RetrievalConfig { alpha, beta, ..RetrievalConfig::default() };
            let scaled = RetrievalConfig { alpha: alpha * scale, beta: beta * scale, ..cfg };
            let mut a = enumerate_paths(&g, &important);
            let mut b = a.clone();
            for p in a.iter_mut() {
                p.validate(&g).unwrap();
                p.score = score_path(p, &important, &cfg);
                prop_assert!(p.score >= 0.0 && p.score <= alpha + beta + 1e-12);
                prop_assert!(important.has_entity(p.start()));
            }
            for p in b.iter_mut() {
                p.score = score_path(p, &important, &scaled);
            }
            let order = |ps: &[ReasoningPath]| {
                let mut idx: Vec<usize> = (0..ps.len()).collect();
                idx.sort_by(|&i, &j| ps[j].score.total_cmp(&ps[i].score).then(i.cmp(&j)));
                idx
            };
            // equal-score groups may differ by rounding only if scores differ by < 1e-12
            let (oa, ob) = (order(&a), order(&b));
            for (x, y) in oa.iter().zip(&ob) {
                if x != y {
                    prop_assert!((a[*x].score - a[*y].score).abs() < 1e-9);
                }
            }
        }
    }
}
