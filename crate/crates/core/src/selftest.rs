//! Quick end-user self-check: the path enumerator against exhaustive search, the
//! expansion contract, encoder gradients against finite differences, attention
//! normalisation, relabelling invariance and the optimizer recurrences.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    encode_graph_kagnet, encode_graph_mhgrn, kagnet_backward, mhgrn_backward, ConceptVocab, Dims, KagnetParams,
    MhgrnParams,
};
use crate::error::Result;
use crate::kg::{ConceptId, EdgeDir, KnowledgeGraph};
use crate::numerics::{grad_check, OptimizerConfig, OptimizerKind, OptimizerState, ParamGrads, ParamStore, Tensor};
use crate::random::{random_kg, random_schema_graph, random_vector, relabel};
use crate::schema::{build_schema_graph, enumerate_paths, expand_schema_graph, ExtractionConfig, NodeOrigin, Path, PathEdge};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(&mut ChaCha8Rng) -> Result<std::result::Result<String, String>>;

pub fn run_selftest(seed: u64) -> Vec<CheckResult> {
    let checks: [(&'static str, Check); 7] = [
        ("path enumeration vs exhaustive search", check_paths),
        ("schema graph expansion contract", check_expansion),
        ("kagnet gradients", check_kagnet_gradients),
        ("mhgrn gradients", check_mhgrn_gradients),
        ("attention normalisation", check_normalisation),
        ("relabelling invariance", check_invariance),
        ("optimizer recurrences", check_optimizers),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let (passed, detail) = match f(&mut rng) {
                Ok(Ok(d)) => (true, d),
                Ok(Err(d)) => (false, d),
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { name, passed, detail }
        })
        .collect()
}

fn exhaustive_paths(kg: &KnowledgeGraph, q: &BTreeSet<ConceptId>, a: &BTreeSet<ConceptId>, k: usize) -> Vec<Path> {
    fn walk(
        kg: &KnowledgeGraph,
        nodes: &mut Vec<ConceptId>,
        edges: &mut Vec<PathEdge>,
        k: usize,
        a: &BTreeSet<ConceptId>,
        out: &mut Vec<Path>,
    ) {
        if !edges.is_empty() && a.contains(nodes.last().unwrap()) {
            out.push(Path {
                nodes: nodes.clone(),
                edges: edges.clone(),
            });
        }
        if edges.len() == k {
            return;
        }
        let at = *nodes.last().unwrap();
        for t in kg.triples() {
            for (from, to, dir) in [(t.head, t.tail, EdgeDir::Forward), (t.tail, t.head, EdgeDir::Inverse)] {
                if from == at && !nodes.contains(&to) {
                    nodes.push(to);
                    edges.push(PathEdge {
                        relation: t.relation,
                        dir,
                    });
                    walk(kg, nodes, edges, k, a, out);
                    nodes.pop();
                    edges.pop();
                }
            }
        }
    }
    let mut out = Vec::new();
    for &s in q {
        walk(kg, &mut vec![s], &mut Vec::new(), k, a, &mut out);
    }
    out.sort();
    out.dedup();
    out
}

fn random_sets(rng: &mut ChaCha8Rng, n: usize) -> (BTreeSet<ConceptId>, BTreeSet<ConceptId>) {
    let mut pick = |m: usize| -> BTreeSet<ConceptId> { (0..m).map(|_| ConceptId(rng.gen_range(0..n as u32))).collect() };
    (pick(2), pick(2))
}

fn check_paths(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let mut total = 0;
    for i in 0..100 {
        let n = rng.gen_range(2..12);
        let m = rng.gen_range(0..30);
        let kg = random_kg(rng, n, m, 3);
        let k = rng.gen_range(1..=3);
        let (q, a) = random_sets(rng, n);
        let cfg = ExtractionConfig {
            k,
            max_paths_per_pair: usize::MAX,
        };
        let got = enumerate_paths(&kg, &q, &a, &cfg).paths;
        let want = exhaustive_paths(&kg, &q, &a, k);
        if got != want {
            return Ok(Err(format!("graph {i}: {} paths, exhaustive search found {}", got.len(), want.len())));
        }
        total += got.len();
    }
    Ok(Ok(format!("100 graphs, {total} paths")))
}

fn check_expansion(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let mut added = 0;
    for i in 0..50 {
        let n = rng.gen_range(4..14);
        let m = rng.gen_range(5..40);
        let kg = random_kg(rng, n, m, 3);
        let (q, a) = random_sets(rng, n);
        let paths = enumerate_paths(&kg, &q, &a, &ExtractionConfig::default());
        let sg = build_schema_graph(&format!("s{i}"), &paths, &q, &a);
        let seed = rng.gen();
        let ex = expand_schema_graph(&kg, &sg, seed);
        if ex != expand_schema_graph(&kg, &sg, seed) {
            return Ok(Err(format!("graph {i}: expansion is not seed-deterministic")));
        }
        if ex.nodes[..sg.nodes.len()] != sg.nodes[..] || !sg.edges.is_subset(&ex.edges) || ex.paths != sg.paths {
            return Ok(Err(format!("graph {i}: expansion altered the original graph")));
        }
        let grounded = sg.nodes.iter().filter(|n| n.origin.is_grounded()).count();
        let extra = &ex.nodes[sg.nodes.len()..];
        if extra.len() > grounded || extra.iter().any(|n| n.origin != NodeOrigin::Extra) {
            return Ok(Err(format!("graph {i}: {} extra nodes for {grounded} grounded", extra.len())));
        }
        let isa = kg.isa_relation();
        if ex.edges.difference(&sg.edges).any(|e| Some(e.relation) != isa) {
            return Ok(Err(format!("graph {i}: expansion used a non-IsA edge")));
        }
        added += extra.len();
    }
    Ok(Ok(format!("50 graphs, {added} nodes added")))
}

const DIMS: Dims = Dims { d_s: 3, d_c: 4, d_p: 3 };

fn perturbed(store: &ParamStore) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(store.num_scalars() as u64);
    let mut st = store.clone();
    for t in st.tensors_mut() {
        t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
    }
    st
}

fn gradient_report<F>(store: &ParamStore, s: &[f64], pg: &ParamGrads, ds: Vec<f64>, loss: F) -> Result<f64>
where
    F: Fn(&ParamStore, &[f64]) -> Result<f64>,
{
    let mut analytic = pg.to_dense(store);
    analytic.push(Tensor::vector(ds));
    let mut point = store.tensors().to_vec();
    point.push(Tensor::vector(s.to_vec()));
    let f = |ts: &[Tensor]| -> Result<f64> {
        let mut st = store.clone();
        let n = ts.len() - 1;
        st.tensors_mut().clone_from_slice(&ts[..n]);
        loss(&st, ts[n].data())
    };
    Ok(grad_check(f, &point, &analytic, 1e-5, 1e-4)?.max_rel_error)
}

fn check_kagnet_gradients(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 10 {
        let mut store = ParamStore::new();
        let vocab = ConceptVocab::new((0..5).map(ConceptId));
        let p = KagnetParams::init(&mut store, vocab.rows(), 2, DIMS, 2, rng)?;
        let store = perturbed(&store);
        let sg = random_schema_graph(rng, 5, 6, 2, 3);
        let s = random_vector(rng, DIMS.d_s);
        let up = random_vector(rng, DIMS.d_p);
        let mut tape = crate::numerics::Tape::new();
        let sv = tape.input(Tensor::vector(s.clone()));
        p.forward(&mut tape, &store, &vocab, &sg, sv)?;
        if tape.min_relu_margin() < 1e-3 {
            continue;
        }
        let (pg, ds) = kagnet_backward(&p, &store, &vocab, &sg, &s, &up)?;
        let err = gradient_report(&store, &s, &pg, ds, |st, s| {
            let (g, _) = encode_graph_kagnet(&p, st, &vocab, &sg, s)?;
            Ok(g.iter().zip(&up).map(|(a, b)| a * b).sum())
        })?;
        worst = worst.max(err);
        checked += 1;
    }
    Ok(if worst <= 1e-4 {
        Ok(format!("10 instances, max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} exceeds 1e-4"))
    })
}

fn check_mhgrn_gradients(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mut store = ParamStore::new();
        let vocab = ConceptVocab::new((0..6).map(ConceptId));
        let p = MhgrnParams::init(&mut store, vocab.rows(), 2, DIMS, 2, rng)?;
        let store = perturbed(&store);
        let sg = random_schema_graph(rng, 6, 8, 2, 0);
        let s = random_vector(rng, DIMS.d_s);
        let up = random_vector(rng, DIMS.d_c);
        let (pg, ds) = mhgrn_backward(&p, &store, &vocab, &sg, &s, &up)?;
        let err = gradient_report(&store, &s, &pg, ds, |st, s| {
            let (g, _) = encode_graph_mhgrn(&p, st, &vocab, &sg, s)?;
            Ok(g.iter().zip(&up).map(|(a, b)| a * b).sum())
        })?;
        worst = worst.max(err);
    }
    Ok(if worst <= 1e-4 {
        Ok(format!("10 instances, max relative error {worst:.2e}"))
    } else {
        Err(format!("max relative error {worst:.2e} exceeds 1e-4"))
    })
}

fn check_normalisation(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let vocab = ConceptVocab::new((0..8).map(ConceptId));
    let mut store = ParamStore::new();
    let kp = KagnetParams::init(&mut store, vocab.rows(), 3, DIMS, 2, rng)?;
    let mp = MhgrnParams::init(&mut store, vocab.rows(), 3, DIMS, 2, rng)?;
    let store = perturbed(&store);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (n, m, paths) = (rng.gen_range(1..8), rng.gen_range(0..12), rng.gen_range(1..6));
        let sg = random_schema_graph(rng, n, m, 3, paths);
        let s = random_vector(rng, DIMS.d_s);
        let (_, alpha) = encode_graph_kagnet(&kp, &store, &vocab, &sg, &s)?;
        let (_, trace) = encode_graph_mhgrn(&mp, &store, &vocab, &sg, &s)?;
        for dist in trace.relations.iter().chain([&alpha, &trace.hops, &trace.nodes]) {
            worst = worst.max((dist.iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok(if worst <= 1e-9 {
        Ok(format!("50 graphs, max deviation {worst:.1e}"))
    } else {
        Err(format!("attention sums deviate from 1 by {worst:.1e}"))
    })
}

fn check_invariance(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let vocab = ConceptVocab::new((0..8).map(ConceptId));
    let mut store = ParamStore::new();
    let kp = KagnetParams::init(&mut store, vocab.rows(), 3, DIMS, 2, rng)?;
    let mp = MhgrnParams::init(&mut store, vocab.rows(), 3, DIMS, 2, rng)?;
    let store = perturbed(&store);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let sg = random_schema_graph(rng, 8, 12, 3, 5);
        let other = relabel(&sg, rng);
        let s = random_vector(rng, DIMS.d_s);
        let pairs = [
            (encode_graph_kagnet(&kp, &store, &vocab, &sg, &s)?.0, encode_graph_kagnet(&kp, &store, &vocab, &other, &s)?.0),
            (encode_graph_mhgrn(&mp, &store, &vocab, &sg, &s)?.0, encode_graph_mhgrn(&mp, &store, &vocab, &other, &s)?.0),
        ];
        for (a, b) in &pairs {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok(if worst <= 1e-10 {
        Ok(format!("30 graphs, max difference {worst:.1e}"))
    } else {
        Err(format!("graph vectors differ by {worst:.1e} after relabelling"))
    })
}

fn check_optimizers(rng: &mut ChaCha8Rng) -> Result<std::result::Result<String, String>> {
    let theta = random_vector(rng, 6);
    let grad: Vec<f64> = random_vector(rng, 6).into_iter().map(|g| if g == 0.0 { 0.5 } else { g }).collect();
    let lr = 0.01;
    let mut cfg = OptimizerConfig::new(OptimizerKind::Adam, lr);
    cfg.epsilon = 0.0;
    let mut p = Tensor::vector(theta.clone());
    OptimizerState::new(cfg, &p).step(&mut p, &Tensor::vector(grad.clone()))?;
    for ((new, old), g) in p.data().iter().zip(&theta).zip(&grad) {
        if (new - (old - lr * g.signum())).abs() > 1e-12 {
            return Ok(Err("first Adam step is not a sign step".into()));
        }
    }
    let rcfg = OptimizerConfig::new(OptimizerKind::RAdam, lr);
    let mut p = Tensor::vector(theta.clone());
    OptimizerState::new(rcfg, &p).step(&mut p, &Tensor::vector(grad.clone()))?;
    for ((new, old), g) in p.data().iter().zip(&theta).zip(&grad) {
        if (new - (old - lr * g)).abs() > 1e-12 {
            return Ok(Err("first RAdam step is not a momentum step".into()));
        }
    }
    Ok(Ok("first-step rules hold".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_selftest(0) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
