use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NodeOrigin, SchemaEdge, SchemaGraph, SchemaNode};
use crate::kg::{EdgeDir, KnowledgeGraph};
use crate::util::{fnv1a, mix_seed};

/// Attaches one uniformly chosen `IsA` neighbour (either direction) to every grounded
/// node that has a neighbour not yet in the graph. Intermediate and extra nodes are not
/// expanded and paths are not re-enumerated.
///
/// The choice for each node is drawn from a generator seeded by
/// `(seed, statement_ref, concept id)`, so it does not depend on node order or on
/// other statements.
pub fn expand_schema_graph(kg: &KnowledgeGraph, sg: &SchemaGraph, seed: u64) -> SchemaGraph {
    let mut out = sg.clone();
    let Some(isa) = kg.isa_relation() else {
        log::warn!("no IsA relation in the knowledge graph; expansion skipped");
        return out;
    };
    let stmt = fnv1a(sg.statement_ref.as_bytes());
    for i in 0..sg.nodes.len() {
        let node = &sg.nodes[i];
        if !node.origin.is_grounded() || !kg.contains(node.concept) {
            continue;
        }
        let candidates: Vec<_> = kg
            .isa_neighbors(node.concept)
            .into_iter()
            .filter(|(c, _)| out.node_index(*c).is_none())
            .collect();
        if candidates.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, stmt, node.concept.0 as u64]));
        let (pick, dir) = candidates[rng.gen_range(0..candidates.len())];
        let new = out.nodes.len();
        out.nodes.push(SchemaNode {
            concept: pick,
            origin: NodeOrigin::Extra,
        });
        let (head, tail) = match dir {
            EdgeDir::Forward => (i, new),
            EdgeDir::Inverse => (new, i),
        };
        out.edges.insert(SchemaEdge {
            head,
            relation: isa,
            tail,
        });
    }
    out
}
