//! Path-based encoder: GCN over the schema graph, an LSTM over each relational path,
//! and statement-conditioned attention pooling of the path embeddings.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;

use super::{check_statement, glorot, insert, local_index, uniform, weighted_sum, ConceptVocab, Dims, CONCEPT_INIT};
use crate::error::{Error, Result};
use crate::kg::ConceptId;
use crate::numerics::{ParamGrads, ParamId, ParamStore, Tape, Tensor, Var};
use crate::schema::SchemaGraph;

pub const DEFAULT_GCN_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct KagnetParams {
    pub dims: Dims,
    pub relations: usize,
    /// `vocab rows x d_c`
    pub concept_emb: ParamId,
    /// `2·relations x d_c`, row `2r` forward and `2r + 1` inverse.
    pub relation_emb: ParamId,
    /// `d_c x d_c` each
    pub gcn: Vec<ParamId>,
    pub lstm_wx: ParamId,
    pub lstm_wh: ParamId,
    pub lstm_bias: ParamId,
    /// `d_c x (d_s + d_p)`
    pub att_m: ParamId,
    pub att_b: ParamId,
    pub att_v: ParamId,
}

impl KagnetParams {
    pub fn init(
        store: &mut ParamStore,
        vocab_rows: usize,
        relations: usize,
        dims: Dims,
        layers: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        dims.validate()?;
        if relations == 0 || vocab_rows == 0 {
            return Err(Error::Invalid("encoder needs at least one relation and one concept row".into()));
        }
        let Dims { d_s, d_c, d_p } = dims;
        let concept_emb = insert(store, "kagnet.concept_emb".into(), uniform(rng, &[vocab_rows, d_c], CONCEPT_INIT))?;
        let relation_emb = insert(store, "kagnet.relation_emb".into(), uniform(rng, &[2 * relations, d_c], CONCEPT_INIT))?;
        let gcn = (0..layers)
            .map(|l| insert(store, format!("kagnet.gcn.{l}"), glorot(rng, d_c, d_c)))
            .collect::<Result<Vec<_>>>()?;
        let lstm_wx = insert(store, "kagnet.lstm.w_x".into(), glorot(rng, 4 * d_p, d_c))?;
        let lstm_wh = insert(store, "kagnet.lstm.w_h".into(), glorot(rng, 4 * d_p, d_p))?;
        let mut bias = vec![0.0; 4 * d_p];
        bias[d_p..2 * d_p].iter_mut().for_each(|b| *b = 1.0);
        let lstm_bias = insert(store, "kagnet.lstm.bias".into(), Tensor::vector(bias))?;
        let att_m = insert(store, "kagnet.att.m".into(), glorot(rng, d_c, d_s + d_p))?;
        let att_b = insert(store, "kagnet.att.b".into(), Tensor::zeros(&[d_c]))?;
        let att_v = insert(store, "kagnet.att.v".into(), uniform(rng, &[d_c], (3.0 / d_c as f64).sqrt()))?;
        Ok(Self {
            dims,
            relations,
            concept_emb,
            relation_emb,
            gcn,
            lstm_wx,
            lstm_wh,
            lstm_bias,
            att_m,
            att_b,
            att_v,
        })
    }

    /// Every parameter owned by this encoder.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.concept_emb, self.relation_emb];
        ids.extend(&self.gcn);
        ids.extend([self.lstm_wx, self.lstm_wh, self.lstm_bias, self.att_m, self.att_b, self.att_v]);
        ids
    }

    /// Returns the graph vector node and the path attention weights.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &ConceptVocab,
        sg: &SchemaGraph,
        s: Var,
    ) -> Result<(Var, Vec<f64>)> {
        let Dims { d_s, d_p, .. } = self.dims;
        check_statement(tape, s, d_s)?;
        if sg.paths.is_empty() {
            return Ok((tape.input(Tensor::zeros(&[d_p])), Vec::new()));
        }
        let local: HashMap<ConceptId, usize> = sg.nodes.iter().enumerate().map(|(i, n)| (n.concept, i)).collect();
        let rows: Vec<Var> = sg
            .nodes
            .iter()
            .map(|n| tape.param_row(store, self.concept_emb, vocab.row(n.concept)))
            .collect();
        let mut h = tape.stack_rows(&rows)?;
        let mut adjacency = vec![Vec::new(); sg.nodes.len()];
        for e in &sg.edges {
            adjacency[e.head].push(e.tail);
            adjacency[e.tail].push(e.head);
        }
        for &w in &self.gcn {
            let w = tape.param(store, w);
            h = tape.gcn(h, &adjacency, w)?;
        }

        let wx = tape.param(store, self.lstm_wx);
        let wh = tape.param(store, self.lstm_wh);
        let bias = tape.param(store, self.lstm_bias);
        let zero = tape.input(Tensor::zeros(&[d_p]));
        let mut node_vars: HashMap<usize, Var> = HashMap::new();
        let mut rel_vars: HashMap<usize, Var> = HashMap::new();
        let mut path_vecs = Vec::with_capacity(sg.paths.len());
        for path in &sg.paths {
            if path.nodes.len() != path.edges.len() + 1 {
                return Err(Error::Invalid(format!("{}: malformed path", sg.statement_ref)));
            }
            let (mut hs, mut cs) = (zero, zero);
            for (i, c) in path.nodes.iter().enumerate() {
                let v = match local.get(c) {
                    Some(&v) => v,
                    None => local_index(sg, *c)?,
                };
                let x = *node_vars.entry(v).or_insert_with(|| tape.row(h, v));
                (hs, cs) = lstm_cell(tape, wx, wh, bias, x, hs, cs, d_p)?;
                if let Some(e) = path.edges.get(i) {
                    if e.relation.0 as usize >= self.relations {
                        return Err(Error::Invalid(format!("relation {} outside embedding table", e.relation.0)));
                    }
                    let r = 2 * e.relation.0 as usize + e.dir.index();
                    let x = *rel_vars.entry(r).or_insert_with(|| tape.param_row(store, self.relation_emb, r));
                    (hs, cs) = lstm_cell(tape, wx, wh, bias, x, hs, cs, d_p)?;
                }
            }
            path_vecs.push(hs);
        }

        let m = tape.param(store, self.att_m);
        let b = tape.param(store, self.att_b);
        let v = tape.param(store, self.att_v);
        let mut scores = Vec::with_capacity(path_vecs.len());
        for &p in &path_vecs {
            let x = tape.concat(&[s, p]);
            let mx = tape.matvec(m, x)?;
            let pre = tape.add(mx, b)?;
            let act = tape.tanh(pre);
            scores.push(tape.dot(v, act)?);
        }
        let a = tape.stack(&scores)?;
        let alpha = tape.softmax(a)?;
        let g = weighted_sum(tape, alpha, &path_vecs)?;
        Ok((g, tape.value(alpha).data().to_vec()))
    }
}

#[allow(clippy::too_many_arguments)]
fn lstm_cell(
    tape: &mut Tape,
    wx: Var,
    wh: Var,
    bias: Var,
    x: Var,
    h: Var,
    c: Var,
    hd: usize,
) -> Result<(Var, Var)> {
    let zx = tape.matvec(wx, x)?;
    let zh = tape.matvec(wh, h)?;
    let z = tape.add(zx, zh)?;
    let z = tape.add(z, bias)?;
    let i = tape.slice(z, 0, hd)?;
    let i = tape.sigmoid(i);
    let f = tape.slice(z, hd, hd)?;
    let f = tape.sigmoid(f);
    let g = tape.slice(z, 2 * hd, hd)?;
    let g = tape.tanh(g);
    let o = tape.slice(z, 3 * hd, hd)?;
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_new = tape.add(fc, ig)?;
    let tc = tape.tanh(c_new);
    let h_new = tape.mul(o, tc)?;
    Ok((h_new, c_new))
}

/// Graph vector and path attention weights for one statement.
pub fn encode_graph_kagnet(
    params: &KagnetParams,
    store: &ParamStore,
    vocab: &ConceptVocab,
    sg: &SchemaGraph,
    s: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new();
    let sv = tape.input(Tensor::vector(s.to_vec()));
    let (g, alpha) = params.forward(&mut tape, store, vocab, sg, sv)?;
    Ok((tape.value(g).data().to_vec(), alpha))
}

/// Gradients of `upstream · g` with respect to the encoder parameters and to `s`.
pub fn kagnet_backward(
    params: &KagnetParams,
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
    use crate::kg::{EdgeDir, RelationId};
    use crate::numerics::{attention_score, gcn_layer, grad_check, lstm_step, softmax, LstmParams};
    use crate::schema::{NodeOrigin, Path, PathEdge, SchemaEdge, SchemaNode};
    use rand::{Rng, SeedableRng};

    const DIMS: Dims = Dims { d_s: 3, d_c: 4, d_p: 3 };

    fn setup(seed: u64, n: usize, relations: usize) -> (ParamStore, KagnetParams, ConceptVocab, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let vocab = ConceptVocab::new((0..n as u32).map(ConceptId));
        let p = KagnetParams::init(&mut store, vocab.rows(), relations, DIMS, 2, &mut rng).unwrap();
        // spread values so the attention and gates are far from symmetric points
        for t in store.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.8..0.8));
        }
        (store, p, vocab, rng)
    }

    /// Forward pass written directly against the dense layer functions.
    fn reference(p: &KagnetParams, store: &ParamStore, vocab: &ConceptVocab, sg: &SchemaGraph, s: &[f64]) -> Vec<f64> {
        let d_c = p.dims.d_c;
        if sg.paths.is_empty() {
            return vec![0.0; p.dims.d_p];
        }
        let emb = store.get(p.concept_emb);
        let mut h = Tensor::zeros(&[sg.nodes.len(), d_c]);
        for (i, n) in sg.nodes.iter().enumerate() {
            h.row_mut(i).copy_from_slice(emb.row(vocab.row(n.concept)));
        }
        let mut adj = vec![Vec::new(); sg.nodes.len()];
        for e in &sg.edges {
            adj[e.head].push(e.tail);
            adj[e.tail].push(e.head);
        }
        for &w in &p.gcn {
            h = gcn_layer(&h, &adj, store.get(w)).unwrap();
        }
        let lstm = LstmParams {
            w_x: store.get(p.lstm_wx).clone(),
            w_h: store.get(p.lstm_wh).clone(),
            bias: store.get(p.lstm_bias).clone(),
        };
        let rel = store.get(p.relation_emb);
        let mut pvs = Vec::new();
        for path in &sg.paths {
            let mut hs = vec![0.0; p.dims.d_p];
            let mut cs = vec![0.0; p.dims.d_p];
            for (i, c) in path.nodes.iter().enumerate() {
                let v = sg.node_index(*c).unwrap();
                (hs, cs) = lstm_step(h.row(v), &hs, &cs, &lstm).unwrap();
                if let Some(e) = path.edges.get(i) {
                    let r = rel.row(2 * e.relation.0 as usize + e.dir.index());
                    (hs, cs) = lstm_step(r, &hs, &cs, &lstm).unwrap();
                }
            }
            pvs.push(hs);
        }
        let scores: Vec<f64> = pvs
            .iter()
            .map(|pv| {
                let x: Vec<f64> = s.iter().chain(pv).copied().collect();
                attention_score(store.get(p.att_m), store.get(p.att_b).data(), store.get(p.att_v).data(), &x).unwrap()
            })
            .collect();
        let alpha = softmax(&scores).unwrap();
        let mut g = vec![0.0; p.dims.d_p];
        for (a, pv) in alpha.iter().zip(&pvs) {
            g.iter_mut().zip(pv).for_each(|(gi, x)| *gi += a * x);
        }
        g
    }

    fn chain() -> SchemaGraph {
        let nodes = (0..3)
            .map(|i| SchemaNode {
                concept: ConceptId(i),
                origin: NodeOrigin::Intermediate,
            })
            .collect();
        let e = |h, r, t| SchemaEdge {
            head: h,
            relation: RelationId(r),
            tail: t,
        };
        let path = Path {
            nodes: vec![ConceptId(0), ConceptId(1), ConceptId(2)],
            edges: vec![
                PathEdge {
                    relation: RelationId(0),
                    dir: EdgeDir::Forward,
                },
                PathEdge {
                    relation: RelationId(1),
                    dir: EdgeDir::Inverse,
                },
            ],
        };
        SchemaGraph {
            statement_ref: "chain".into(),
            nodes,
            edges: [e(0, 0, 1), e(2, 1, 1)].into_iter().collect(),
            paths: vec![path],
            truncated: false,
        }
    }

    #[test]
    fn zero_paths_give_zero_vector() {
        let (store, p, vocab, _) = setup(1, 3, 2);
        let mut sg = chain();
        sg.paths.clear();
        let (g, alpha) = encode_graph_kagnet(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        assert!(alpha.is_empty());
    }

    #[test]
    fn single_path_takes_all_weight() {
        let (store, p, vocab, _) = setup(2, 3, 2);
        let sg = chain();
        let (g, alpha) = encode_graph_kagnet(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(alpha, vec![1.0]);
        let (g2, _) = encode_graph_kagnet(&p, &store, &vocab, &sg, &[-5.0, 4.0, 9.0]).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn identical_paths_split_evenly() {
        let (store, p, vocab, _) = setup(3, 3, 2);
        let mut sg = chain();
        let (g1, _) = encode_graph_kagnet(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        sg.paths.push(sg.paths[0].clone());
        let (g2, alpha) = encode_graph_kagnet(&p, &store, &vocab, &sg, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5]);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_dense_reference() {
        for seed in 0..20 {
            let (store, p, vocab, mut rng) = setup(seed, 6, 3);
            let sg = random_graph(&mut rng, 6, 8, 3, 4);
            let s = random_vec(&mut rng, 3);
            let (g, alpha) = encode_graph_kagnet(&p, &store, &vocab, &sg, &s).unwrap();
            let want = reference(&p, &store, &vocab, &sg, &s);
            for (a, b) in g.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "seed {seed}: {a} vs {b}");
            }
            assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut done = 0;
        for seed in 100..140 {
            let (store, p, vocab, mut rng) = setup(seed, 5, 2);
            let sg = random_graph(&mut rng, 5, 6, 2, 3);
            let s = random_vec(&mut rng, 3);
            let up = random_vec(&mut rng, 3);
            let mut tape = Tape::new();
            let sv = tape.input(Tensor::vector(s.clone()));
            p.forward(&mut tape, &store, &vocab, &sg, sv).unwrap();
            if tape.min_relu_margin() < 1e-4 {
                continue;
            }
            let (pg, ds) = kagnet_backward(&p, &store, &vocab, &sg, &s, &up).unwrap();
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
            done += 1;
        }
        assert!(done >= 20, "only {done} instances away from ReLU kinks");
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let (store, p, vocab, mut rng) = setup(7, 5, 2);
        let sg = random_graph(&mut rng, 5, 6, 2, 3);
        let (pg, ds) = kagnet_backward(&p, &store, &vocab, &sg, &[0.3, 0.1, -0.2], &[0.0; 3]).unwrap();
        assert!(pg.to_dense(&store).iter().all(|t| t.data().iter().all(|x| *x == 0.0)));
        assert!(ds.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn unused_relation_row_has_zero_gradient() {
        let (store, p, vocab, _) = setup(8, 3, 4);
        let (pg, _) = kagnet_backward(&p, &store, &vocab, &chain(), &[0.3, 0.1, -0.2], &[1.0, -1.0, 0.5]).unwrap();
        let rel = &pg.to_dense(&store)[p.relation_emb.0];
        // the chain uses rows 0 (relation 0 forward) and 3 (relation 1 inverse)
        for r in [1, 2, 4, 5, 6, 7] {
            assert!(rel.row(r).iter().all(|x| *x == 0.0), "row {r}");
        }
        assert!(rel.row(0).iter().any(|x| *x != 0.0));
        assert!(rel.row(3).iter().any(|x| *x != 0.0));
    }

    #[test]
    fn invariant_under_relabelling() {
        for seed in 0..20 {
            let (store, p, vocab, mut rng) = setup(seed + 50, 6, 3);
            let sg = random_graph(&mut rng, 6, 9, 3, 5);
            let s = random_vec(&mut rng, 3);
            let (g, _) = encode_graph_kagnet(&p, &store, &vocab, &sg, &s).unwrap();
            let (g2, _) = encode_graph_kagnet(&p, &store, &vocab, &relabel(&sg, &mut rng), &s).unwrap();
            for (a, b) in g.iter().zip(&g2) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn statement_dimension_checked() {
        let (store, p, vocab, _) = setup(9, 3, 2);
        assert!(matches!(
            encode_graph_kagnet(&p, &store, &vocab, &chain(), &[0.0; 5]),
            Err(Error::Dimension(_))
        ));
    }
}
