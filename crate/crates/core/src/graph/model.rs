use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::extract::ExtractedTriple;
use crate::text::normalize_name;

const DESCRIPTION_SEPARATOR: &str = "; ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    /// Normalized name; the graph key.
    pub id: String,
    /// First surface form seen, used for display.
    pub name: String,
    pub surface_forms: BTreeSet<String>,
    pub description: String,
    pub source_segments: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
    pub name: String,
    pub description: String,
    pub source_segments: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub source_segment: usize,
    pub evidence: String,
}

/// Which way a triple is walked when leaving a given endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Leaving from the head towards the tail.
    Forward,
    /// Leaving from the tail towards the head.
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

/// Entities, relations and triples extracted from one retrieval context, with
/// an adjacency index listing every triple under both of its endpoints.
///
/// Every entity is the head or tail of some triple, every relation labels some
/// triple, and no two triples share (head, relation, tail).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    entities: BTreeMap<String, Entity>,
    relations: BTreeMap<String, Relation>,
    triples: Vec<Triple>,
    adjacency: BTreeMap<String, Vec<(usize, Direction)>>,
}

#[derive(Default)]
struct Descriptions(BTreeMap<String, Vec<String>>);

impl Descriptions {
    fn add(&mut self, id: &str, desc: &str) {
        let parts = self.0.entry(id.to_string()).or_default();
        for piece in desc.split(DESCRIPTION_SEPARATOR) {
            let piece = piece.trim();
            if !piece.is_empty() && !parts.iter().any(|p| p == piece) {
                parts.push(piece.to_string());
            }
        }
    }

    fn joined(&self, id: &str) -> String {
        self.0
            .get(id)
            .map(|p| p.join(DESCRIPTION_SEPARATOR))
            .unwrap_or_default()
    }
}

/// Folds extracted triples into a graph: ids are normalized, entities and
/// relations deduplicated with surface forms, segments and unique
/// descriptions merged, and repeated (head, relation, tail) triples collapsed
/// onto the first occurrence.
pub fn build_graph(extracted: &[ExtractedTriple]) -> KnowledgeGraph {
    let mut entities: BTreeMap<String, Entity> = BTreeMap::new();
    let mut relations: BTreeMap<String, Relation> = BTreeMap::new();
    let mut entity_desc = Descriptions::default();
    let mut relation_desc = Descriptions::default();
    let mut triples = Vec::new();
    let mut seen = HashSet::new();

    for x in extracted {
        let head = normalize_name(&x.head);
        let tail = normalize_name(&x.tail);
        let rel = normalize_name(&x.relation);
        if head.is_empty() || tail.is_empty() || rel.is_empty() {
            continue;
        }

        for (id, surface, desc) in [(&head, &x.head, &x.head_desc), (&tail, &x.tail, &x.tail_desc)] {
            let surface = surface.split_whitespace().collect::<Vec<_>>().join(" ");
            let e = entities.entry(id.clone()).or_insert_with(|| Entity {
                id: id.clone(),
                name: surface.clone(),
                surface_forms: BTreeSet::new(),
                description: String::new(),
                source_segments: BTreeSet::new(),
            });
            e.surface_forms.insert(surface);
            e.source_segments.insert(x.source_segment);
            entity_desc.add(id, desc);
        }

        let r = relations.entry(rel.clone()).or_insert_with(|| Relation {
            id: rel.clone(),
            name: x.relation.split_whitespace().collect::<Vec<_>>().join(" "),
            description: String::new(),
            source_segments: BTreeSet::new(),
        });
        r.source_segments.insert(x.source_segment);
        relation_desc.add(&rel, &x.rel_desc);

        if seen.insert((head.clone(), rel.clone(), tail.clone())) {
            triples.push(Triple {
                head,
                relation: rel,
                tail,
                source_segment: x.source_segment,
                evidence: x.evidence.clone(),
            });
        }
    }

    for (id, e) in entities.iter_mut() {
        e.description = entity_desc.joined(id);
    }
    for (id, r) in relations.iter_mut() {
        r.description = relation_desc.joined(id);
    }

    let adjacency = index_adjacency(&triples);
    KnowledgeGraph {
        entities,
        relations,
        triples,
        adjacency,
    }
}

fn index_adjacency(triples: &[Triple]) -> BTreeMap<String, Vec<(usize, Direction)>> {
    let mut adjacency: BTreeMap<String, Vec<(usize, Direction)>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        adjacency
            .entry(t.head.clone())
            .or_default()
            .push((i, Direction::Forward));
        adjacency
            .entry(t.tail.clone())
            .or_default()
            .push((i, Direction::Backward));
    }
    adjacency
}

impl KnowledgeGraph {
    /// Reassembles a graph from stored parts, rejecting anything that breaks
    /// the graph invariants.
    pub fn from_parts(entities: Vec<Entity>, relations: Vec<Relation>, triples: Vec<Triple>) -> Result<Self, String> {
        let mut emap = BTreeMap::new();
        for e in entities {
            if e.id.is_empty() {
                return Err("entity with empty id".into());
            }
            if let Some(prev) = emap.insert(e.id.clone(), e) {
                return Err(format!("duplicate entity {:?}", prev.id));
            }
        }
        let mut rmap = BTreeMap::new();
        for r in relations {
            if r.id.is_empty() {
                return Err("relation with empty id".into());
            }
            if let Some(prev) = rmap.insert(r.id.clone(), r) {
                return Err(format!("duplicate relation {:?}", prev.id));
            }
        }
        let adjacency = index_adjacency(&triples);
        let graph = Self {
            entities: emap,
            relations: rmap,
            triples,
            adjacency,
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Checks referential integrity and the exact-union property of the
    /// entity and relation sets.
    pub fn validate(&self) -> Result<(), String> {
        let mut used_entities = BTreeSet::new();
        let mut used_relations = BTreeSet::new();
        let mut keys = HashSet::new();
        for (i, t) in self.triples.iter().enumerate() {
            for id in [&t.head, &t.tail] {
                if !self.entities.contains_key(id) {
                    return Err(format!("triple {i}: unknown entity {id:?}"));
                }
                used_entities.insert(id.as_str());
            }
            if !self.relations.contains_key(&t.relation) {
                return Err(format!("triple {i}: unknown relation {:?}", t.relation));
            }
            used_relations.insert(t.relation.as_str());
            if !keys.insert((&t.head, &t.relation, &t.tail)) {
                return Err(format!(
                    "triple {i}: duplicate ({}, {}, {})",
                    t.head, t.relation, t.tail
                ));
            }
        }
        if let Some(orphan) = self.entities.keys().find(|k| !used_entities.contains(k.as_str())) {
            return Err(format!("entity {orphan:?} is not part of any triple"));
        }
        if let Some(orphan) = self.relations.keys().find(|k| !used_relations.contains(k.as_str())) {
            return Err(format!("relation {orphan:?} labels no triple"));
        }
        Ok(())
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.values()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn relation(&self, id: &str) -> Option<&Relation> {
        self.relations.get(id)
    }

    /// Triples incident to `entity`, with the direction of travel away from it.
    pub fn incident(&self, entity: &str) -> &[(usize, Direction)] {
        self.adjacency.get(entity).map_or(&[], Vec::as_slice)
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            entities: self.entities.len(),
            relations: self.relations.len(),
            triples: self.triples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// The triples re-expressed as extraction output, carrying merged
    /// descriptions. Feeding this back to [`build_graph`] reproduces the same
    /// ids, triples and descriptions.
    pub fn to_extracted(&self) -> Vec<ExtractedTriple> {
        self.triples
            .iter()
            .map(|t| {
                let h = &self.entities[&t.head];
                let r = &self.relations[&t.relation];
                let tl = &self.entities[&t.tail];
                ExtractedTriple {
                    head: h.name.clone(),
                    relation: r.name.clone(),
                    tail: tl.name.clone(),
                    head_desc: h.description.clone(),
                    rel_desc: r.description.clone(),
                    tail_desc: tl.description.clone(),
                    evidence: t.evidence.clone(),
                    source_segment: t.source_segment,
                }
            })
            .collect()
    }

    pub(crate) fn into_parts(self) -> (Vec<Entity>, Vec<Relation>, Vec<Triple>) {
        (
            self.entities.into_values().collect(),
            self.relations.into_values().collect(),
            self.triples,
        )
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    pub(crate) fn x(h: &str, r: &str, t: &str) -> ExtractedTriple {
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
    fn empty_input_gives_empty_graph() {
        let g = build_graph(&[]);
        assert_eq!(
            g.stats(),
            GraphStats {
                entities: 0,
                relations: 0,
                triples: 0
            }
        );
        assert!(g.validate().is_ok());
    }

    #[test]
    fn normalization_collapses_duplicates() {
        let g = build_graph(&[x("a", "r", "b"), x("A ", "r", "b")]);
        assert_eq!(
            g.stats(),
            GraphStats {
                entities: 2,
                relations: 1,
                triples: 1
            }
        );
        assert_eq!(g.entity("a").unwrap().surface_forms.len(), 2);
        assert_eq!(g.entity("a").unwrap().name, "a");
    }

    #[test]
    fn descriptions_merge_and_first_evidence_wins() {
        let mut first = x("Paris", "CAPITAL_OF", "France");
        first.head_desc = "City in Europe".into();
        first.evidence = "first".into();
        first.source_segment = 0;
        let mut second = x("paris", "capital_of", "FRANCE");
        second.head_desc = "Capital city".into();
        second.evidence = "second".into();
        second.source_segment = 3;
        let mut third = x("Paris", "LOCATED_IN", "Europe");
        third.head_desc = "City in Europe".into();
        let g = build_graph(&[first, second, third]);
        let paris = g.entity("paris").unwrap();
        assert_eq!(paris.description, "City in Europe; Capital city");
        assert_eq!(paris.source_segments, BTreeSet::from([0, 3]));
        assert_eq!(g.triples()[0].evidence, "first");
        assert_eq!(g.triples().len(), 2);
        assert_eq!(g.incident("paris").len(), 2);
        assert_eq!(g.incident("france"), &[(0, Direction::Backward)]);
    }

    #[test]
    fn blank_ids_are_dropped() {
        let g = build_graph(&[x("  ", "r", "b"), x("a", "", "b")]);
        assert!(g.is_empty());
        assert_eq!(g.stats().entities, 0);
    }

    #[test]
    fn from_parts_rejects_orphans_and_dangling_refs() {
        let g = build_graph(&[x("a", "r", "b")]);
        let (mut es, rs, ts) = g.clone().into_parts();
        assert_eq!(
            KnowledgeGraph::from_parts(es.clone(), rs.clone(), ts.clone()).unwrap(),
            g
        );
        es.pop();
        assert!(KnowledgeGraph::from_parts(es, rs.clone(), ts.clone()).is_err());
        let (mut es, _, _) = g.clone().into_parts();
        es.push(Entity {
            id: "z".into(),
            name: "z".into(),
            ..es[0].clone()
        });
        assert!(KnowledgeGraph::from_parts(es, rs, ts).is_err());
    }

    fn arb_extracted() -> impl Strategy<Value = Vec<ExtractedTriple>> {
        let name = prop::sample::select(vec!["a", "A", " b", "c ", "D", "d", "e e", "E  E"]);
        let rel = prop::sample::select(vec!["r", "R", "s", "t t"]);
        let desc = prop::sample::select(vec!["", "x", "y", "x; z"]);
        prop::collection::vec((name.clone(), rel, name, desc.clone(), desc, 0usize..4), 0..25).prop_map(|v| {
            v.into_iter()
                .map(|(h, r, t, hd, rd, seg)| ExtractedTriple {
                    head_desc: hd.to_string(),
                    rel_desc: rd.to_string(),
                    source_segment: seg,
                    ..x(h, r, t)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn build_invariants(extracted in arb_extracted()) {
            let g = build_graph(&extracted);
            prop_assert!(g.validate().is_ok());
            let s = g.stats();
            prop_assert!(s.entities <= 2 * s.triples);
            prop_assert!(s.relations <= s.triples);
            let listed: usize = g.entities().map(|e| g.incident(&e.id).len()).sum();
            prop_assert_eq!(listed, 2 * s.triples);
        }

        #[test]
        fn rebuild_is_idempotent(extracted in arb_extracted()) {
            let g = build_graph(&extracted);
            let again = build_graph(&g.to_extracted());
            prop_assert_eq!(g.triples(), again.triples());
            let ids = |g: &KnowledgeGraph| g.entities().map(|e| (e.id.clone(), e.description.clone())).collect::<Vec<_>>();
            prop_assert_eq!(ids(&g), ids(&again));
            let rels = |g: &KnowledgeGraph| g.relations().map(|r| (r.id.clone(), r.description.clone())).collect::<Vec<_>>();
            prop_assert_eq!(rels(&g), rels(&again));
        }
    }
}
