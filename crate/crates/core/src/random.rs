//! Seeded random instances for self-checks, benchmarks and tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::kg::{ConceptId, EdgeDir, GraphBuilder, KnowledgeGraph, RelationId};
use crate::schema::{NodeOrigin, Path, PathEdge, SchemaEdge, SchemaGraph, SchemaNode};

/// Random schema graph over concepts `0..n` with `m` edges over `relations`
/// relation types and paths read off random walks.
pub fn random_schema_graph(rng: &mut ChaCha8Rng, n: usize, m: usize, relations: u32, paths: usize) -> SchemaGraph {
    let nodes: Vec<SchemaNode> = (0..n)
        .map(|i| SchemaNode {
            concept: ConceptId(i as u32),
            origin: NodeOrigin::ALL[rng.gen_range(0..NodeOrigin::ALL.len())],
        })
        .collect();
    let mut edges = BTreeSet::new();
    while edges.len() < m.min(n * n * relations as usize) {
        edges.insert(SchemaEdge {
            head: rng.gen_range(0..n),
            relation: RelationId(rng.gen_range(0..relations)),
            tail: rng.gen_range(0..n),
        });
    }
    let edge_list: Vec<SchemaEdge> = edges.iter().copied().collect();
    let mut ps = Vec::new();
    for _ in 0..paths {
        let len = rng.gen_range(0..=3usize);
        let mut at = rng.gen_range(0..n);
        let mut p = Path {
            nodes: vec![ConceptId(at as u32)],
            edges: Vec::new(),
        };
        for _ in 0..len {
            let Some(e) = edge_list.choose(rng) else { break };
            let (dir, next) = if rng.gen_bool(0.5) {
                (EdgeDir::Forward, e.tail)
            } else {
                (EdgeDir::Inverse, e.head)
            };
            p.edges.push(PathEdge {
                relation: e.relation,
                dir,
            });
            at = next;
            p.nodes.push(ConceptId(at as u32));
        }
        ps.push(p);
    }
    SchemaGraph {
        statement_ref: "random".into(),
        nodes,
        edges,
        paths: ps,
        truncated: false,
    }
}

/// Same graph with node indices permuted and paths shuffled.
pub fn relabel(sg: &SchemaGraph, rng: &mut ChaCha8Rng) -> SchemaGraph {
    let n = sg.nodes.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut nodes = vec![sg.nodes[0].clone(); n];
    for (old, &new) in perm.iter().enumerate() {
        nodes[new] = sg.nodes[old].clone();
    }
    let edges = sg
        .edges
        .iter()
        .map(|e| SchemaEdge {
            head: perm[e.head],
            relation: e.relation,
            tail: perm[e.tail],
        })
        .collect();
    let mut paths = sg.paths.clone();
    paths.shuffle(rng);
    SchemaGraph {
        statement_ref: sg.statement_ref.clone(),
        nodes,
        edges,
        paths,
        truncated: sg.truncated,
    }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Knowledge graph over concepts `n0..n{n-1}` with `m` random triples drawn from
/// `relations` relation types, the last of which is `IsA`.
pub fn random_kg(rng: &mut ChaCha8Rng, n: usize, m: usize, relations: usize) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.add_concept(&format!("n{i}"));
    }
    let rel = |r: usize| if r + 1 == relations { "IsA".to_owned() } else { format!("R{r}") };
    for _ in 0..m {
        let r = rng.gen_range(0..relations);
        b.add(&rel(r), &format!("n{}", rng.gen_range(0..n)), &format!("n{}", rng.gen_range(0..n)), 1.0);
    }
    b.build()
}
