use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Path, PathEdge};
use crate::kg::{ConceptId, KnowledgeGraph};

/// Maximum path length in edges.
pub const DEFAULT_K: usize = 2;
pub const DEFAULT_MAX_PATHS_PER_PAIR: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub k: usize,
    pub max_paths_per_pair: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_paths_per_pair: DEFAULT_MAX_PATHS_PER_PAIR,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// Set when some `(source, target)` pair had more paths than the cap.
    pub truncated: bool,
}

/// Hop distance (ignoring direction) from `targets` to every concept within `depth` hops.
fn distances_to(kg: &KnowledgeGraph, targets: &BTreeSet<ConceptId>, depth: usize) -> HashMap<ConceptId, usize> {
    let mut dist: HashMap<ConceptId, usize> = targets.iter().map(|&t| (t, 0)).collect();
    let mut queue: VecDeque<ConceptId> = targets.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == depth {
            continue;
        }
        for n in kg.edges_both(u) {
            dist.entry(n.concept).or_insert_with(|| {
                queue.push_back(n.concept);
                d + 1
            });
        }
    }
    dist
}

/// All simple paths of 1..=K edges from a question concept to a different answer concept,
/// traversing triples in either direction.
///
/// Paths are sorted lexicographically by `(nodes, edges)`. Each `(source, target)` pair
/// keeps at most `max_paths_per_pair` paths, shortest first.
pub fn enumerate_paths(
    kg: &KnowledgeGraph,
    question: &BTreeSet<ConceptId>,
    answer: &BTreeSet<ConceptId>,
    cfg: &ExtractionConfig,
) -> PathSet {
    let k = cfg.k;
    if k == 0 || question.is_empty() || answer.is_empty() {
        return PathSet::default();
    }
    let question: BTreeSet<ConceptId> = question.iter().copied().filter(|c| kg.contains(*c)).collect();
    let answer: BTreeSet<ConceptId> = answer.iter().copied().filter(|c| kg.contains(*c)).collect();
    // a node entered at depth d can still reach a target only if its distance is <= k - d
    let dist = distances_to(kg, &answer, k - 1);
    let mut per_pair: BTreeMap<(ConceptId, ConceptId), Vec<Path>> = BTreeMap::new();

    let mut nodes: Vec<ConceptId> = Vec::with_capacity(k + 1);
    let mut edges: Vec<PathEdge> = Vec::with_capacity(k);
    // explicit DFS stack of neighbour iterators, one per depth
    for &source in &question {
        nodes.clear();
        edges.clear();
        nodes.push(source);
        let mut stack = vec![kg.edges_both(source)];
        while let Some(iter) = stack.last_mut() {
            let Some(n) = iter.next() else {
                stack.pop();
                nodes.pop();
                edges.pop();
                continue;
            };
            if nodes.contains(&n.concept) {
                continue;
            }
            let depth = nodes.len();
            let reach = dist.get(&n.concept).copied();
            if reach.is_none_or(|d| d > k - depth) {
                continue;
            }
            nodes.push(n.concept);
            edges.push(PathEdge {
                relation: n.relation,
                dir: n.dir,
            });
            if answer.contains(&n.concept) {
                per_pair
                    .entry((source, n.concept))
                    .or_default()
                    .push(Path {
                        nodes: nodes.clone(),
                        edges: edges.clone(),
                    });
            }
            if depth < k {
                stack.push(kg.edges_both(n.concept));
            } else {
                nodes.pop();
                edges.pop();
            }
        }
    }

    let mut truncated = false;
    let mut paths = Vec::new();
    for (_, mut ps) in per_pair {
        if ps.len() > cfg.max_paths_per_pair {
            truncated = true;
            ps.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            ps.truncate(cfg.max_paths_per_pair);
        }
        paths.extend(ps);
    }
    paths.sort();
    PathSet { paths, truncated }
}
