//! Schema graphs: the subgraph of the knowledge graph spanned by bounded-length paths
//! between question and answer concepts, plus optional `IsA` expansion.

mod expand;
mod paths;
mod record;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::kg::{ConceptId, EdgeDir, RelationId};

pub use expand::expand_schema_graph;
pub use paths::{enumerate_paths, ExtractionConfig, PathSet, DEFAULT_K, DEFAULT_MAX_PATHS_PER_PAIR};
pub use record::{
    expand_record, extract_record, statement_id, GraphRecord, NodeRecord, RecordEdge,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeOrigin {
    Question,
    Answer,
    Both,
    Intermediate,
    Extra,
}

impl NodeOrigin {
    pub const ALL: [NodeOrigin; 5] = [
        NodeOrigin::Question,
        NodeOrigin::Answer,
        NodeOrigin::Both,
        NodeOrigin::Intermediate,
        NodeOrigin::Extra,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Grounded in the question or the choice text.
    pub fn is_grounded(self) -> bool {
        matches!(self, NodeOrigin::Question | NodeOrigin::Answer | NodeOrigin::Both)
    }

    pub fn from_sets(in_question: bool, in_answer: bool) -> Self {
        match (in_question, in_answer) {
            (true, true) => NodeOrigin::Both,
            (true, false) => NodeOrigin::Question,
            (false, true) => NodeOrigin::Answer,
            (false, false) => NodeOrigin::Intermediate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathEdge {
    pub relation: RelationId,
    pub dir: EdgeDir,
}

/// A simple path; `edges[i]` joins `nodes[i]` to `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    pub nodes: Vec<ConceptId>,
    pub edges: Vec<PathEdge>,
}

impl Path {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Endpoints of each step in stored-triple orientation: `(head, relation, tail)`.
    pub fn triples(&self) -> impl Iterator<Item = (ConceptId, RelationId, ConceptId)> + '_ {
        self.edges.iter().enumerate().map(|(i, e)| {
            let (a, b) = (self.nodes[i], self.nodes[i + 1]);
            match e.dir {
                EdgeDir::Forward => (a, e.relation, b),
                EdgeDir::Inverse => (b, e.relation, a),
            }
        })
    }
}

/// Edge between local node indices, oriented as the stored triple (`head → tail`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SchemaEdge {
    pub head: usize,
    pub relation: RelationId,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaNode {
    pub concept: ConceptId,
    pub origin: NodeOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaGraph {
    pub statement_ref: String,
    pub nodes: Vec<SchemaNode>,
    pub edges: BTreeSet<SchemaEdge>,
    pub paths: Vec<Path>,
    pub truncated: bool,
}

impl SchemaGraph {
    pub fn node_index(&self, c: ConceptId) -> Option<usize> {
        self.nodes.iter().position(|n| n.concept == c)
    }

    pub fn concepts(&self) -> impl Iterator<Item = ConceptId> + '_ {
        self.nodes.iter().map(|n| n.concept)
    }
}

/// Node set = grounded concepts ∪ path nodes, sorted by concept id; edge set = the
/// union of path steps.
pub fn build_schema_graph(
    statement_ref: &str,
    paths: &PathSet,
    question: &BTreeSet<ConceptId>,
    answer: &BTreeSet<ConceptId>,
) -> SchemaGraph {
    let mut all: BTreeSet<ConceptId> = question.union(answer).copied().collect();
    for p in &paths.paths {
        all.extend(p.nodes.iter().copied());
    }
    let nodes: Vec<SchemaNode> = all
        .iter()
        .map(|&c| SchemaNode {
            concept: c,
            origin: NodeOrigin::from_sets(question.contains(&c), answer.contains(&c)),
        })
        .collect();
    let local = |c: ConceptId| all.iter().position(|x| *x == c).expect("path node in node set");
    let mut edges = BTreeSet::new();
    for p in &paths.paths {
        for (h, r, t) in p.triples() {
            edges.insert(SchemaEdge {
                head: local(h),
                relation: r,
                tail: local(t),
            });
        }
    }
    SchemaGraph {
        statement_ref: statement_ref.to_owned(),
        nodes,
        edges,
        paths: paths.paths.clone(),
        truncated: paths.truncated,
    }
}
