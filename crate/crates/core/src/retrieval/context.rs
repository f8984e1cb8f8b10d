use std::fmt::Write;

use super::important::ImportantSets;
use super::paths::ReasoningPath;
use super::RetrievalError;
use crate::graph::{Direction, KnowledgeGraph};

/// Renders a path as three labelled blocks. Display names are used
/// throughout; a hop walked against its triple is drawn as `<--R--`.
///
/// ```text
/// Path: MUNICIPALITY OF NUEVO LAREDO --HAS_MUNICIPAL_SEAT--> NUEVO LAREDO --LOCATED_IN--> SINALOA
/// Entities:
/// - NUEVO LAREDO: Nuevo Laredo is a city in the Mexican state of Sinaloa.
/// - SINALOA:
/// Relations:
/// - LOCATED_IN: Nuevo Laredo is a city located within the state of Sinaloa.
/// ```
///
/// Only important entities and relations get a line; an empty block reads
/// `Entities: none` / `Relations: none`.
pub fn contextualize(
    path: &ReasoningPath,
    graph: &KnowledgeGraph,
    important: &ImportantSets,
) -> Result<String, RetrievalError> {
    let dangling = |id: &str| RetrievalError::DanglingReference(id.to_string());
    let entity = |id: &str| graph.entity(id).ok_or_else(|| dangling(id));
    let relation = |id: &str| graph.relation(id).ok_or_else(|| dangling(id));

    let mut out = String::from("Path: ");
    out.push_str(&entity(&path.nodes[0])?.name);
    for (edge, node) in path.edges.iter().zip(&path.nodes[1..]) {
        if graph.triples().get(edge.triple).is_none() {
            return Err(dangling(&format!("triple #{}", edge.triple)));
        }
        let r = &relation(&edge.relation)?.name;
        let n = &entity(node)?.name;
        match edge.direction {
            Direction::Forward => write!(out, " --{r}--> {n}"),
            Direction::Backward => write!(out, " <--{r}-- {n}"),
        }
        .expect("writing to a String");
    }

    let mut block = |label: &str, lines: Vec<(String, String)>| {
        if lines.is_empty() {
            write!(out, "\n{label}: none").expect("writing to a String");
            return;
        }
        write!(out, "\n{label}:").expect("writing to a String");
        for (name, desc) in lines {
            if desc.is_empty() {
                write!(out, "\n- {name}:")
            } else {
                write!(out, "\n- {name}: {desc}")
            }
            .expect("writing to a String");
        }
    };

    let mut entity_lines = Vec::new();
    for id in path.nodes.iter().filter(|id| important.has_entity(id)) {
        let e = entity(id)?;
        entity_lines.push((e.name.clone(), e.description.clone()));
    }
    let mut relation_lines: Vec<(String, String)> = Vec::new();
    for id in path
        .edges
        .iter()
        .map(|e| &e.relation)
        .filter(|id| important.has_relation(id))
    {
        let r = relation(id)?;
        if !relation_lines.iter().any(|(n, _)| *n == r.name) {
            relation_lines.push((r.name.clone(), r.description.clone()));
        }
    }
    block("Entities", entity_lines);
    block("Relations", relation_lines);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, ExtractedTriple};
    use crate::retrieval::enumerate_paths;

    fn t(h: &str, r: &str, tl: &str, hd: &str, rd: &str) -> ExtractedTriple {
        ExtractedTriple {
            head: h.into(),
            relation: r.into(),
            tail: tl.into(),
            head_desc: hd.into(),
            rel_desc: rd.into(),
            tail_desc: String::new(),
            evidence: String::new(),
            source_segment: 0,
        }
    }

    fn imp(e: &[&str], r: &[&str]) -> ImportantSets {
        ImportantSets {
            entities: e.iter().map(|x| (x.to_string(), 0.5)).collect(),
            relations: r.iter().map(|x| (x.to_string(), 0.5)).collect(),
            k: 10,
        }
    }

    #[test]
    fn golden_rendering() {
        let g = build_graph(&[
            t(
                "Municipality of Nuevo Laredo",
                "HAS_SEAT",
                "Nuevo Laredo",
                "A municipality.",
                "Seat of government.",
            ),
            t(
                "Nuevo Laredo",
                "LOCATED_IN",
                "Sinaloa",
                "A city.",
                "City located within the state.",
            ),
        ]);
        let important = imp(
            &["municipality of nuevo laredo", "nuevo laredo", "sinaloa"],
            &["located_in"],
        );
        let paths = enumerate_paths(&g, &important);
        let p = paths
            .iter()
            .find(|p| p.nodes.len() == 3 && p.start() == "municipality of nuevo laredo")
            .unwrap();
        let text = contextualize(p, &g, &important).unwrap();
        assert_eq!(
            text,
            "Path: Municipality of Nuevo Laredo --HAS_SEAT--> Nuevo Laredo --LOCATED_IN--> Sinaloa\n\
             Entities:\n\
             - Municipality of Nuevo Laredo: A municipality.\n\
             - Nuevo Laredo: A city.\n\
             - Sinaloa:\n\
             Relations:\n\
             - LOCATED_IN: City located within the state."
        );
        let back = paths
            .iter()
            .find(|p| p.start() == "sinaloa" && p.nodes.len() == 2)
            .unwrap();
        let text = contextualize(back, &g, &imp(&["sinaloa"], &[])).unwrap();
        assert_eq!(
            text,
            "Path: Sinaloa <--LOCATED_IN-- Nuevo Laredo\nEntities:\n- Sinaloa:\nRelations: none"
        );
        assert_eq!(text.matches("--").count(), 2);
    }

    #[test]
    fn dangling_reference() {
        let g = build_graph(&[t("a", "r", "b", "", "")]);
        let mut p = enumerate_paths(&g, &imp(&["a"], &[])).remove(0);
        p.nodes[1] = "ghost".into();
        assert!(matches!(
            contextualize(&p, &g, &imp(&[], &[])),
            Err(RetrievalError::DanglingReference(_))
        ));
    }
}
