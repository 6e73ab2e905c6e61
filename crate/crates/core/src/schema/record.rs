//! Line-oriented JSON form of a schema graph, keyed by concept and relation names so
//! downstream stages do not need the knowledge graph.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    build_schema_graph, enumerate_paths, expand_schema_graph, ExtractionConfig, NodeOrigin, Path, PathEdge,
    SchemaEdge, SchemaGraph, SchemaNode,
};
use crate::error::{Error, Result};
use crate::grounding::GroundedRecord;
use crate::kg::{ConceptId, EdgeDir, KnowledgeGraph};

/// Identifier of one question/choice statement.
pub fn statement_id(question_id: &str, choice_label: &str) -> String {
    format!("{question_id}:{choice_label}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub concept: String,
    pub origin: NodeOrigin,
}

/// `[head_idx, relation, tail_idx, dir]`; `dir = 0` means the triple runs head → tail,
/// `dir = 1` tail → head. Writers always emit 0.
pub type RecordEdge = (usize, String, usize, u8);

/// Path element: node index or relation name, `~` prefixed for inverse traversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathToken {
    Node(usize),
    Relation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: String,
    pub choice_label: String,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<RecordEdge>,
    pub paths: Vec<Vec<PathToken>>,
    pub truncated: bool,
}

fn rel_name(kg: &KnowledgeGraph, r: crate::kg::RelationId) -> String {
    kg.relation_name(r).unwrap_or("?").to_owned()
}

impl GraphRecord {
    pub fn statement_id(&self) -> String {
        statement_id(&self.id, &self.choice_label)
    }

    /// `markers` are concept names outside the graph, appended as answer nodes.
    pub fn from_schema(kg: &KnowledgeGraph, sg: &SchemaGraph, id: &str, choice_label: &str, markers: &[NodeRecord]) -> Self {
        let mut nodes: Vec<NodeRecord> = sg
            .nodes
            .iter()
            .map(|n| NodeRecord {
                concept: kg.concept_name(n.concept).unwrap_or("?").to_owned(),
                origin: n.origin,
            })
            .collect();
        nodes.extend(markers.iter().cloned());
        let edges = sg
            .edges
            .iter()
            .map(|e| (e.head, rel_name(kg, e.relation), e.tail, 0))
            .collect();
        let local = |c: ConceptId| sg.node_index(c).expect("path node in schema graph");
        let paths = sg
            .paths
            .iter()
            .map(|p| {
                let mut toks = vec![PathToken::Node(local(p.nodes[0]))];
                for (i, e) in p.edges.iter().enumerate() {
                    let name = rel_name(kg, e.relation);
                    toks.push(PathToken::Relation(match e.dir {
                        EdgeDir::Forward => name,
                        EdgeDir::Inverse => format!("~{name}"),
                    }));
                    toks.push(PathToken::Node(local(p.nodes[i + 1])));
                }
                toks
            })
            .collect();
        Self {
            id: id.to_owned(),
            choice_label: choice_label.to_owned(),
            nodes,
            edges,
            paths,
            truncated: sg.truncated,
        }
    }

    /// Resolves names against `kg`. Nodes whose concept is not in the graph come back as
    /// markers; they must not be referenced by edges or paths.
    pub fn to_schema(&self, kg: &KnowledgeGraph) -> Result<(SchemaGraph, Vec<NodeRecord>)> {
        let bad = |m: String| Error::Record {
            id: self.statement_id(),
            message: m,
        };
        let mut local: Vec<Option<usize>> = Vec::with_capacity(self.nodes.len());
        let mut nodes = Vec::new();
        let mut markers = Vec::new();
        for n in &self.nodes {
            match kg.concept_id(&n.concept) {
                Some(c) => {
                    local.push(Some(nodes.len()));
                    nodes.push(SchemaNode {
                        concept: c,
                        origin: n.origin,
                    });
                }
                None => {
                    local.push(None);
                    markers.push(n.clone());
                }
            }
        }
        let map = |i: usize| -> Result<usize> {
            local
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| bad(format!("node index {i} is not a graph concept")))
        };
        let relation = |name: &str| {
            kg.relation_id(name)
                .ok_or_else(|| bad(format!("unknown relation {name}")))
        };
        let mut edges = BTreeSet::new();
        for (h, r, t, dir) in &self.edges {
            let (h, t) = if *dir == 0 { (*h, *t) } else { (*t, *h) };
            edges.insert(SchemaEdge {
                head: map(h)?,
                relation: relation(r)?,
                tail: map(t)?,
            });
        }
        let mut paths = Vec::new();
        for toks in &self.paths {
            let mut p = Path {
                nodes: Vec::new(),
                edges: Vec::new(),
            };
            for (i, tok) in toks.iter().enumerate() {
                match (i % 2, tok) {
                    (0, PathToken::Node(n)) => p.nodes.push(nodes[map(*n)?].concept),
                    (1, PathToken::Relation(r)) => {
                        let (name, dir) = match r.strip_prefix('~') {
                            Some(rest) => (rest, EdgeDir::Inverse),
                            None => (r.as_str(), EdgeDir::Forward),
                        };
                        p.edges.push(PathEdge {
                            relation: relation(name)?,
                            dir,
                        });
                    }
                    _ => return Err(bad("path must alternate node and relation".into())),
                }
            }
            if p.nodes.len() != p.edges.len() + 1 {
                return Err(bad("path must start and end with a node".into()));
            }
            paths.push(p);
        }
        let sg = SchemaGraph {
            statement_ref: self.statement_id(),
            nodes,
            edges,
            paths,
            truncated: self.truncated,
        };
        Ok((sg, markers))
    }
}

/// Path enumeration and schema graph assembly for one grounded statement.
pub fn extract_record(kg: &KnowledgeGraph, g: &GroundedRecord, cfg: &ExtractionConfig) -> GraphRecord {
    let question: BTreeSet<ConceptId> = g.question_concepts.iter().filter_map(|c| kg.concept_id(c)).collect();
    let mut answer = BTreeSet::new();
    let mut markers = Vec::new();
    for c in &g.answer_concepts {
        match kg.concept_id(c) {
            Some(id) => {
                answer.insert(id);
            }
            None => markers.push(NodeRecord {
                concept: c.clone(),
                origin: NodeOrigin::Answer,
            }),
        }
    }
    let sid = statement_id(&g.id, &g.choice_label);
    let paths = enumerate_paths(kg, &question, &answer, cfg);
    let sg = build_schema_graph(&sid, &paths, &question, &answer);
    GraphRecord::from_schema(kg, &sg, &g.id, &g.choice_label, &markers)
}

pub fn expand_record(kg: &KnowledgeGraph, rec: &GraphRecord, seed: u64) -> Result<GraphRecord> {
    let (sg, markers) = rec.to_schema(kg)?;
    let ex = expand_schema_graph(kg, &sg, seed);
    Ok(GraphRecord::from_schema(kg, &ex, &rec.id, &rec.choice_label, &markers))
}
