//! Multi-hop relational message passing with statement-conditioned attention over
//! relation types, hops and nodes.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha8Rng;

use super::{check_statement, glorot, insert, uniform, weighted_sum, ConceptVocab, Dims, CONCEPT_INIT};
use crate::error::{Error, Result};
use crate::kg::EdgeDir;
use crate::numerics::{ParamGrads, ParamId, ParamStore, Tape, Tensor, Var};
use crate::schema::{NodeOrigin, SchemaGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct MhgrnParams {
    pub dims: Dims,
    pub relations: usize,
    pub k_hop: usize,
    /// `vocab rows x d_c`
    pub concept_emb: ParamId,
    /// `5 x d_c`, indexed by [`NodeOrigin::index`].
    pub type_emb: ParamId,
    pub w_in: ParamId,
    pub b_in: ParamId,
    /// `transforms[k - 1][2r + dir]`, each `d_c x d_c`.
    pub transforms: Vec<Vec<ParamId>>,
    /// `2·relations x d_c`
    pub relation_emb: ParamId,
    /// `d_c x d_s`
    pub relation_query: ParamId,
    /// `(k_hop + 1) x d_s`
    pub hop_query: ParamId,
    pub hop_bias: ParamId,
    /// `d_c x (d_s + d_c)`
    pub node_m: ParamId,
    pub node_b: ParamId,
    pub node_v: ParamId,
}

/// Attention distributions of one forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MhgrnTrace {
    /// Per node with incoming messages: weights over the relation types present there.
    pub relations: Vec<Vec<f64>>,
    pub hops: Vec<f64>,
    pub nodes: Vec<f64>,
}

fn type_index(relation: u32, dir: EdgeDir) -> usize {
    2 * relation as usize + dir.index()
}

impl MhgrnParams {
    pub fn init(
        store: &mut ParamStore,
        vocab_rows: usize,
        relations: usize,
        dims: Dims,
        k_hop: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        dims.validate()?;
        if relations == 0 || vocab_rows == 0 {
            return Err(Error::Invalid("encoder needs at least one relation and one concept row".into()));
        }
        let Dims { d_s, d_c, .. } = dims;
        let concept_emb = insert(store, "mhgrn.concept_emb".into(), uniform(rng, &[vocab_rows, d_c], CONCEPT_INIT))?;
        let type_emb = insert(store, "mhgrn.type_emb".into(), uniform(rng, &[NodeOrigin::ALL.len(), d_c], 0.5))?;
        let w_in = insert(store, "mhgrn.w_in".into(), glorot(rng, d_c, d_c))?;
        let b_in = insert(store, "mhgrn.b_in".into(), Tensor::zeros(&[d_c]))?;
        let mut transforms = Vec::with_capacity(k_hop);
        for k in 1..=k_hop {
            let hop = (0..2 * relations)
                .map(|t| insert(store, format!("mhgrn.w.{k}.{t}"), glorot(rng, d_c, d_c)))
                .collect::<Result<Vec<_>>>()?;
            transforms.push(hop);
        }
        let relation_emb = insert(store, "mhgrn.relation_emb".into(), uniform(rng, &[2 * relations, d_c], CONCEPT_INIT))?;
        let relation_query = insert(store, "mhgrn.relation_query".into(), glorot(rng, d_c, d_s))?;
        let hop_query = insert(store, "mhgrn.hop_query".into(), glorot(rng, k_hop + 1, d_s))?;
        let hop_bias = insert(store, "mhgrn.hop_bias".into(), Tensor::zeros(&[k_hop + 1]))?;
        let node_m = insert(store, "mhgrn.node.m".into(), glorot(rng, d_c, d_s + d_c))?;
        let node_b = insert(store, "mhgrn.node.b".into(), Tensor::zeros(&[d_c]))?;
        let node_v = insert(store, "mhgrn.node.v".into(), uniform(rng, &[d_c], (3.0 / d_c as f64).sqrt()))?;
        Ok(Self {
            dims,
            relations,
            k_hop,
            concept_emb,
            type_emb,
            w_in,
            b_in,
            transforms,
            relation_emb,
            relation_query,
            hop_query,
            hop_bias,
            node_m,
            node_b,
            node_v,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.concept_emb, self.type_emb, self.w_in, self.b_in];
        ids.extend(self.transforms.iter().flatten());
        ids.extend([
            self.relation_emb,
            self.relation_query,
            self.hop_query,
            self.hop_bias,
            self.node_m,
            self.node_b,
            self.node_v,
        ]);
        ids
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &ConceptVocab,
        sg: &SchemaGraph,
        s: Var,
    ) -> Result<(Var, MhgrnTrace)> {
        let Dims { d_s, d_c, .. } = self.dims;
        check_statement(tape, s, d_s)?;
        let mut trace = MhgrnTrace::default();
        let n = sg.nodes.len();
        if n == 0 {
            return Ok((tape.input(Tensor::zeros(&[d_c])), trace));
        }

        let w_in = tape.param(store, self.w_in);
        let b_in = tape.param(store, self.b_in);
        let mut type_rows: HashMap<usize, Var> = HashMap::new();
        let mut h = Vec::with_capacity(n);
        for node in &sg.nodes {
            let e = tape.param_row(store, self.concept_emb, vocab.row(node.concept));
            let ti = node.origin.index();
            let t = *type_rows.entry(ti).or_insert_with(|| tape.param_row(store, self.type_emb, ti));
            let x = tape.add(e, t)?;
            let x = tape.matvec(w_in, x)?;
            let x = tape.add(x, b_in)?;
            h.push(tape.tanh(x));
        }

        // incoming messages per node as (source, relation type)
        let mut incoming: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for e in &sg.edges {
            if e.relation.0 as usize >= self.relations {
                return Err(Error::Invalid(format!("relation {} outside parameter tables", e.relation.0)));
            }
            if e.head >= n || e.tail >= n {
                return Err(Error::Invalid(format!("{}: edge endpoint out of range", sg.statement_ref)));
            }
            incoming[e.tail].push((e.head, type_index(e.relation.0, EdgeDir::Forward)));
            incoming[e.head].push((e.tail, type_index(e.relation.0, EdgeDir::Inverse)));
        }

        let mut beta: Vec<BTreeMap<usize, Var>> = vec![BTreeMap::new(); n];
        if incoming.iter().any(|m| !m.is_empty()) {
            let q = tape.param(store, self.relation_query);
            let u = tape.matvec(q, s)?;
            let mut type_scores: BTreeMap<usize, Var> = BTreeMap::new();
            for (v, msgs) in incoming.iter().enumerate() {
                if msgs.is_empty() {
                    continue;
                }
                let mut types: Vec<usize> = msgs.iter().map(|m| m.1).collect();
                types.sort_unstable();
                types.dedup();
                let mut scores = Vec::with_capacity(types.len());
                for &t in &types {
                    let sc = match type_scores.get(&t) {
                        Some(&sc) => sc,
                        None => {
                            let r = tape.param_row(store, self.relation_emb, t);
                            let sc = tape.dot(r, u)?;
                            type_scores.insert(t, sc);
                            sc
                        }
                    };
                    scores.push(sc);
                }
                let a = tape.stack(&scores)?;
                let w = tape.softmax(a)?;
                trace.relations.push(tape.value(w).data().to_vec());
                for (i, &t) in types.iter().enumerate() {
                    beta[v].insert(t, tape.pick(w, i));
                }
            }
        }

        let mut states = vec![h.clone()];
        for k in 0..self.k_hop {
            let prev = &states[k];
            let mut weights: HashMap<usize, Var> = HashMap::new();
            let mut transformed: HashMap<(usize, usize), Var> = HashMap::new();
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let msgs = &incoming[v];
                if msgs.is_empty() {
                    next.push(prev[v]);
                    continue;
                }
                let mut terms = Vec::with_capacity(msgs.len());
                for &(u, t) in msgs {
                    let m = match transformed.get(&(u, t)) {
                        Some(&m) => m,
                        None => {
                            let w = *weights
                                .entry(t)
                                .or_insert_with(|| tape.param(store, self.transforms[k][t]));
                            let m = tape.matvec(w, prev[u])?;
                            transformed.insert((u, t), m);
                            m
                        }
                    };
                    terms.push(tape.scale_by(beta[v][&t], m)?);
                }
                let sum = tape.sum(&terms)?;
                next.push(tape.scale(sum, 1.0 / msgs.len() as f64));
            }
            states.push(next);
        }

        let hq = tape.param(store, self.hop_query);
        let hb = tape.param(store, self.hop_bias);
        let hs = tape.matvec(hq, s)?;
        let hs = tape.add(hs, hb)?;
        let gamma = tape.softmax(hs)?;
        trace.hops = tape.value(gamma).data().to_vec();

        let m = tape.param(store, self.node_m);
        let b = tape.param(store, self.node_b);
        let nv = tape.param(store, self.node_v);
        let mut z = Vec::with_capacity(n);
        let mut scores = Vec::with_capacity(n);
        for v in 0..n {
            let per_hop: Vec<Var> = states.iter().map(|st| st[v]).collect();
            let zv = weighted_sum(tape, gamma, &per_hop)?;
            let x = tape.concat(&[s, zv]);
            let mx = tape.matvec(m, x)?;
            let pre = tape.add(mx, b)?;
            let act = tape.tanh(pre);
            scores.push(tape.dot(nv, act)?);
            z.push(zv);
        }
        let a = tape.stack(&scores)?;
        let delta = tape.softmax(a)?;
        trace.nodes = tape.value(delta).data().to_vec();
        let g = weighted_sum(tape, delta, &z)?;
        Ok((g, trace))
    }
}

/// Graph vector and attention trace for one statement.
pub fn encode_graph_mhgrn(
    params: &MhgrnParams,
    store: &ParamStore,
    vocab: &ConceptVocab,
    sg: &SchemaGraph,
    s: &[f64],
) -> Result<(Vec<f64>, MhgrnTrace)> {
    let mut tape = Tape::new();
    let sv = tape.input(Tensor::vector(s.to_vec()));
    let (g, trace) = params.forward(&mut tape, store, vocab, sg, sv)?;
    Ok((tape.value(g).data().to_vec(), trace))
}

/// Gradients of `upstream · g` with respect to the encoder parameters and to `s`.
pub fn mhgrn_backward(
    params: &MhgrnParams,
    store: &ParamStore,
    vocab: &ConceptVocab,
    sg: &SchemaGraph,
    s: &[f64],
    upstream: &[f64],
) -> Result<(ParamGrads, Vec<f64>)> {
    let mut tape = Tape::new();
    let sv = tape.input(Tensor::vector(s.to_vec()));
    let (g, _) = params.forward(&mut tape, store, vocab, sg, sv)?;
    let grads = tape.backward(g, upstream)?;
    let ds = grads.of(sv).map_or_else(|| vec![0.0; s.len()], <[f64]>::to_vec);
    Ok((tape.param_grads(&grads), ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::testing::{random_graph, random_vec, relabel};
    use crate::kg::{ConceptId, RelationId};
    use crate::numerics::{grad_check, softmax};
    use crate::schema::{SchemaEdge, SchemaNode};
    use rand::{Rng, SeedableRng};

    const DIMS: Dims = Dims { d_s: 3, d_c: 4, d_p: 2 };

    fn setup(seed: u64, n: usize, relations: usize, k_hop: usize) -> (ParamStore, MhgrnParams, ConceptVocab, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let vocab = ConceptVocab::new((0..n as u32).map(ConceptId));
        let p = MhgrnParams::init(&mut store, vocab.rows(), relations, DIMS, k_hop, &mut rng).unwrap();
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
        }
        (store, p, vocab, rng)
    }

    fn mv(m: &Tensor, x: &[f64]) -> Vec<f64> {
        (0..m.rows()).map(|r| m.row(r).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Scalar-loop transcription of the message-passing equations.
    fn reference(p: &MhgrnParams, st: &ParamStore, vocab: &ConceptVocab, sg: &SchemaGraph, s: &[f64]) -> Vec<f64> {
        let d_c = p.dims.d_c;
        let n = sg.nodes.len();
        if n == 0 {
            return vec![0.0; d_c];
        }
        let h0: Vec<Vec<f64>> = sg
            .nodes
            .iter()
            .map(|nd| {
                let e = st.get(p.concept_emb).row(vocab.row(nd.concept));
                let t = st.get(p.type_emb).row(nd.origin.index());
                let x: Vec<f64> = e.iter().zip(t).map(|(a, b)| a + b).collect();
                mv(st.get(p.w_in), &x)
                    .iter()
                    .zip(st.get(p.b_in).data())
                    .map(|(a, b)| (a + b).tanh())
                    .collect()
            })
            .collect();
        let mut inc: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for e in &sg.edges {
            inc[e.tail].push((e.head, 2 * e.relation.0 as usize));
            inc[e.head].push((e.tail, 2 * e.relation.0 as usize + 1));
        }
        let u = mv(st.get(p.relation_query), s);
        let score = |t: usize| -> f64 { st.get(p.relation_emb).row(t).iter().zip(&u).map(|(a, b)| a * b).sum() };
        let mut hs = vec![h0];
        for k in 0..p.k_hop {
            let prev = hs[k].clone();
            let mut next = prev.clone();
            for v in 0..n {
                if inc[v].is_empty() {
                    continue;
                }
                let mut types: Vec<usize> = inc[v].iter().map(|x| x.1).collect();
                types.sort_unstable();
                types.dedup();
                let w = softmax(&types.iter().map(|&t| score(t)).collect::<Vec<_>>()).unwrap();
                let mut acc = vec![0.0; d_c];
                for &(u_, t) in &inc[v] {
                    let b = w[types.iter().position(|x| *x == t).unwrap()];
                    let m = mv(st.get(p.transforms[k][t]), &prev[u_]);
                    acc.iter_mut().zip(&m).for_each(|(a, x)| *a += b * x);
                }
                next[v] = acc.iter().map(|a| a / inc[v].len() as f64).collect();
            }
            hs.push(next);
        }
        let hop: Vec<f64> = mv(st.get(p.hop_query), s)
            .iter()
            .zip(st.get(p.hop_bias).data())
            .map(|(a, b)| a + b)
            .collect();
        let gamma = softmax(&hop).unwrap();
        let z: Vec<Vec<f64>> = (0..n)
            .map(|v| (0..d_c).map(|j| (0..=p.k_hop).map(|k| gamma[k] * hs[k][v][j]).sum()).collect())
            .collect();
        let scores: Vec<f64> = z
            .iter()
            .map(|zv| {
                let x: Vec<f64> = s.iter().chain(zv).copied().collect();
                mv(st.get(p.node_m), &x)
                    .iter()
                    .zip(st.get(p.node_b).data())
                    .zip(st.get(p.node_v).data())
                    .map(|((a, b), c)| c * (a + b).tanh())
                    .sum()
            })
            .collect();
        let delta = softmax(&scores).unwrap();
        (0..d_c).map(|j| (0..n).map(|v| delta[v] * z[v][j]).sum()).collect()
    }

    fn single() -> SchemaGraph {
        SchemaGraph {
            statement_ref: "one".into(),
            nodes: vec![SchemaNode {
                concept: ConceptId(0),
                origin: NodeOrigin::Question,
            }],
            edges: Default::default(),
            paths: Vec::new(),
            truncated: false,
        }
    }

    #[test]
    fn empty_graph_gives_zero() {
        let (store, p, vocab, _) = setup(1, 3, 2, 2);
        let mut sg = single();
        sg.nodes.clear();
        let (g, _) = encode_graph_mhgrn(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(g, vec![0.0; 4]);
    }

    #[test]
    fn single_node_returns_initial_state() {
        let (store, p, vocab, _) = setup(2, 3, 2, 2);
        let sg = single();
        let (g, trace) = encode_graph_mhgrn(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(trace.nodes, vec![1.0]);
        let mut tape = Tape::new();
        let e = Tensor::vector(
            store.get(p.concept_emb).row(1).iter().zip(store.get(p.type_emb).row(0)).map(|(a, b)| a + b).collect(),
        );
        let x = tape.input(e);
        let w = tape.param(&store, p.w_in);
        let b = tape.param(&store, p.b_in);
        let y = tape.matvec(w, x).unwrap();
        let y = tape.add(y, b).unwrap();
        let h0 = tape.tanh(y);
        for (a, b) in g.iter().zip(tape.value(h0).data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_scalar_reference() {
        for seed in 0..20 {
            let (store, p, vocab, mut rng) = setup(seed, 6, 2, 2);
            let sg = random_graph(&mut rng, 6, 7, 2, 0);
            let s = random_vec(&mut rng, 3);
            let (g, trace) = encode_graph_mhgrn(&p, &store, &vocab, &sg, &s).unwrap();
            let want = reference(&p, &store, &vocab, &sg, &s);
            for (a, b) in g.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
            }
            for dist in trace.relations.iter().chain([&trace.hops, &trace.nodes]) {
                assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 200..230 {
            let (store, p, vocab, mut rng) = setup(seed, 6, 2, 2);
            let sg = random_graph(&mut rng, 6, 8, 2, 0);
            let s = random_vec(&mut rng, 3);
            let up = random_vec(&mut rng, 4);
            let (pg, ds) = mhgrn_backward(&p, &store, &vocab, &sg, &s, &up).unwrap();
            let mut analytic = pg.to_dense(&store);
            analytic.push(Tensor::vector(ds));
            let mut point = store.tensors().to_vec();
            point.push(Tensor::vector(s.clone()));
            let loss = |ts: &[Tensor]| -> Result<f64> {
                let mut st = store.clone();
                let n = ts.len() - 1;
                st.tensors_mut().clone_from_slice(&ts[..n]);
                let g = reference(&p, &st, &vocab, &sg, ts[n].data());
                Ok(g.iter().zip(&up).map(|(a, b)| a * b).sum())
            };
            let report = grad_check(loss, &point, &analytic, 1e-6, 1e-4).unwrap();
            assert!(report.passed(), "seed {seed}: {report:?}");
        }
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let (store, p, vocab, mut rng) = setup(3, 6, 2, 2);
        let sg = random_graph(&mut rng, 6, 8, 2, 0);
        let (pg, ds) = mhgrn_backward(&p, &store, &vocab, &sg, &[0.3, 0.1, -0.2], &[0.0; 4]).unwrap();
        assert!(pg.to_dense(&store).iter().all(|t| t.data().iter().all(|x| *x == 0.0)));
        assert!(ds.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn absent_relation_transform_has_zero_gradient() {
        let (store, p, vocab, mut rng) = setup(4, 6, 3, 2);
        let mut sg = random_graph(&mut rng, 6, 8, 2, 0);
        sg.edges.insert(SchemaEdge {
            head: 0,
            relation: RelationId(1),
            tail: 1,
        });
        let (pg, _) = mhgrn_backward(&p, &store, &vocab, &sg, &[0.3, 0.1, -0.2], &[1.0, 0.5, -1.0, 2.0]).unwrap();
        let dense = pg.to_dense(&store);
        for hop in &p.transforms {
            assert!(dense[hop[4].0].data().iter().all(|x| *x == 0.0));
            assert!(dense[hop[5].0].data().iter().all(|x| *x == 0.0));
        }
        assert!(dense[p.transforms[0][2].0].data().iter().any(|x| *x != 0.0));
    }

    #[test]
    fn zero_hops_pools_typed_embeddings() {
        let (store, p, vocab, mut rng) = setup(5, 6, 2, 0);
        let sg = random_graph(&mut rng, 6, 8, 2, 0);
        let mut bare = sg.clone();
        bare.edges.clear();
        let s = random_vec(&mut rng, 3);
        let (g, trace) = encode_graph_mhgrn(&p, &store, &vocab, &sg, &s).unwrap();
        let (g_bare, _) = encode_graph_mhgrn(&p, &store, &vocab, &bare, &s).unwrap();
        assert_eq!(trace.hops, vec![1.0]);
        for (a, b) in g.iter().zip(&g_bare) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn invariant_under_relabelling() {
        for seed in 0..20 {
            let (store, p, vocab, mut rng) = setup(seed + 50, 7, 3, 2);
            let sg = random_graph(&mut rng, 7, 10, 3, 0);
            let s = random_vec(&mut rng, 3);
            let (g, _) = encode_graph_mhgrn(&p, &store, &vocab, &sg, &s).unwrap();
            let (g2, _) = encode_graph_mhgrn(&p, &store, &vocab, &relabel(&sg, &mut rng), &s).unwrap();
            for (a, b) in g.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
