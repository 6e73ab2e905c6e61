//! Value-level neural primitives. The autodiff tape reuses these kernels.

use super::tensor::{dot, matvec, Tensor};
use crate::error::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::EmptyAttention);
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Closed neighbourhood `N(v) ∪ {v}` for every node, sorted and deduplicated.
pub fn closed_neighbourhoods(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    adjacency
        .iter()
        .enumerate()
        .map(|(v, ns)| {
            let mut s: Vec<usize> = ns.iter().copied().chain(std::iter::once(v)).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect()
}

/// Mean-aggregated graph convolution:
/// `H'_v = ReLU( mean_{u ∈ N(v) ∪ {v}} H_u · W )`.
///
/// `h` is `n x d_in`, `w` is `d_in x d_out`, `adjacency[v]` lists the neighbours of `v`
/// (a self entry is allowed and not double counted).
pub fn gcn_layer(h: &Tensor, adjacency: &[Vec<usize>], w: &Tensor) -> Result<Tensor> {
    let (_, pre) = gcn_preactivation(h, adjacency, w)?;
    let d_out = w.cols();
    let data = pre.into_iter().map(|x| x.max(0.0)).collect();
    Tensor::matrix(h.rows(), d_out, data)
}

/// Returns the aggregated inputs (`n x d_in`) and pre-activations (`n x d_out`).
pub(crate) fn gcn_preactivation(
    h: &Tensor,
    adjacency: &[Vec<usize>],
    w: &Tensor,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if h.shape().len() != 2 || w.shape().len() != 2 {
        return Err(Error::dim("gcn_layer expects matrices"));
    }
    let n = h.rows();
    let d_in = h.cols();
    if adjacency.len() != n {
        return Err(Error::dim(format!(
            "adjacency covers {} nodes, embeddings have {n}",
            adjacency.len()
        )));
    }
    if w.rows() != d_in {
        return Err(Error::dim(format!(
            "weight has {} rows, embeddings have width {d_in}",
            w.rows()
        )));
    }
    let d_out = w.cols();
    let hood = closed_neighbourhoods(adjacency);
    let mut agg = vec![0.0; n * d_in];
    for (v, ns) in hood.iter().enumerate() {
        let row = &mut agg[v * d_in..(v + 1) * d_in];
        for &u in ns {
            if u >= n {
                return Err(Error::dim(format!("neighbour {u} out of range")));
            }
            for (a, x) in row.iter_mut().zip(h.row(u)) {
                *a += x;
            }
        }
        let inv = 1.0 / ns.len() as f64;
        row.iter_mut().for_each(|a| *a *= inv);
    }
    let mut pre = vec![0.0; n * d_out];
    for v in 0..n {
        let a = &agg[v * d_in..(v + 1) * d_in];
        let out = &mut pre[v * d_out..(v + 1) * d_out];
        for (k, ak) in a.iter().enumerate() {
            for (o, wv) in out.iter_mut().zip(w.row(k)) {
                *o += ak * wv;
            }
        }
    }
    Ok((agg, pre))
}

/// Weights of a single LSTM cell. Gate blocks are stacked in the order input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `4·hidden x input`
    pub w_x: Tensor,
    /// `4·hidden x hidden`
    pub w_h: Tensor,
    /// `4·hidden`
    pub bias: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Tensor::zeros(&[4 * hidden, input]),
            w_h: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.cols()
    }

    pub fn input(&self) -> usize {
        self.w_x.cols()
    }

    fn validate(&self) -> Result<()> {
        let hd = self.hidden();
        if self.w_h.rows() != 4 * hd || self.w_x.rows() != 4 * hd || self.bias.len() != 4 * hd {
            return Err(Error::dim("inconsistent LSTM gate shapes"));
        }
        Ok(())
    }
}

/// One LSTM step; returns `(h', c')`.
pub fn lstm_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    let hd = p.hidden();
    if x.len() != p.input() || h.len() != hd || c.len() != hd {
        return Err(Error::dim(format!(
            "lstm_step: x {} (want {}), h {} and c {} (want {hd})",
            x.len(),
            p.input(),
            h.len(),
            c.len()
        )));
    }
    let zx = matvec(p.w_x.data(), 4 * hd, p.input(), x);
    let zh = matvec(p.w_h.data(), 4 * hd, hd, h);
    let z: Vec<f64> = zx
        .iter()
        .zip(&zh)
        .zip(p.bias.data())
        .map(|((a, b), c)| a + b + c)
        .collect();
    let mut h_new = vec![0.0; hd];
    let mut c_new = vec![0.0; hd];
    for j in 0..hd {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[hd + j]);
        let g = z[2 * hd + j].tanh();
        let o = sigmoid(z[3 * hd + j]);
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    Ok((h_new, c_new))
}

/// Additive attention score `v · tanh(M x + b)`.
pub fn attention_score(m: &Tensor, b: &[f64], v: &[f64], x: &[f64]) -> Result<f64> {
    if m.cols() != x.len() || m.rows() != b.len() || v.len() != b.len() {
        return Err(Error::dim("attention_score shapes"));
    }
    let hidden: Vec<f64> = matvec(m.data(), m.rows(), m.cols(), x)
        .into_iter()
        .zip(b)
        .map(|(a, bb)| (a + bb).tanh())
        .collect();
    Ok(dot(v, &hidden))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(50.0)).abs() < 1e-15);
        assert!((sigmoid(1.7) + sigmoid(-1.7) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[1.0, 1.0, 1.0]).unwrap();
        u.iter().for_each(|x| assert!((x - 1.0 / 3.0).abs() < 1e-15));
        let a = softmax(&[0.0, 2f64.ln()]).unwrap();
        assert!((a[0] - 1.0 / 3.0).abs() < 1e-15 && (a[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(softmax(&[]), Err(Error::EmptyAttention)));
    }

    #[test]
    fn gcn_single_node_identity() {
        let h = Tensor::matrix(1, 2, vec![0.3, 0.7]).unwrap();
        let out = gcn_layer(&h, &[vec![]], &Tensor::identity(2)).unwrap();
        assert_eq!(out.data(), &[0.3, 0.7]);
    }

    #[test]
    fn gcn_zero_weights() {
        let h = Tensor::matrix(3, 2, vec![1.0, -2.0, 3.0, 0.5, -0.1, 4.0]).unwrap();
        let adj = vec![vec![1], vec![0, 2], vec![1]];
        let out = gcn_layer(&h, &adj, &Tensor::zeros(&[2, 3])).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
        assert_eq!(out.shape(), &[3, 3]);
    }

    #[test]
    fn gcn_self_loops_only_is_relu() {
        let h = Tensor::matrix(3, 2, vec![1.0, -2.0, 3.0, 0.5, -0.1, 4.0]).unwrap();
        let out = gcn_layer(&h, &[vec![], vec![1], vec![]], &Tensor::identity(2)).unwrap();
        let relu: Vec<f64> = h.data().iter().map(|x| x.max(0.0)).collect();
        assert_eq!(out.data(), relu.as_slice());
    }

    /// Dense oracle: ReLU(D^-1 (A + I) H W) via explicit matrices.
    fn dense_gcn(h: &[Vec<f64>], a: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = h.len();
        let mut ai = a.to_vec();
        for (i, row) in ai.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let matmul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..x.len())
                .map(|i| {
                    (0..y[0].len())
                        .map(|j| (0..y.len()).map(|k| x[i][k] * y[k][j]).sum())
                        .collect()
                })
                .collect()
        };
        let mut prop = matmul(&ai, h);
        for i in 0..n {
            let deg: f64 = ai[i].iter().sum();
            prop[i].iter_mut().for_each(|x| *x /= deg);
        }
        matmul(&prop, w)
            .into_iter()
            .map(|r| r.into_iter().map(|x| x.max(0.0)).collect())
            .collect()
    }

    #[test]
    fn gcn_matches_dense_oracle_on_path_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let a = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ];
        let expected = dense_gcn(&h, &a, &w);
        let ht = Tensor::matrix(3, 4, h.concat()).unwrap();
        let wt = Tensor::matrix(4, 3, w.concat()).unwrap();
        let got = gcn_layer(&ht, &[vec![1], vec![0, 2], vec![1]], &wt).unwrap();
        for (i, row) in expected.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                assert!((got.row(i)[j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gcn_dimension_mismatch() {
        let h = Tensor::zeros(&[2, 3]);
        assert!(gcn_layer(&h, &[vec![], vec![]], &Tensor::identity(2)).is_err());
        assert!(gcn_layer(&h, &[vec![]], &Tensor::identity(3)).is_err());
    }

    #[test]
    fn lstm_zero_params() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_step(&[0.4, -1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &p).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(c, vec![0.0, 0.0]);

        let p = LstmParams::zeros(1, 1);
        let (h, c) = lstm_step(&[0.0], &[0.0], &[2.0], &p).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-15);
        assert!((h[0] - 0.5 * 1f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.3808).abs() < 1e-4);
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (din, hd) = (3, 2);
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect() };
        let p = LstmParams {
            w_x: Tensor::matrix(4 * hd, din, r(4 * hd * din)).unwrap(),
            w_h: Tensor::matrix(4 * hd, hd, r(4 * hd * hd)).unwrap(),
            bias: Tensor::vector(r(4 * hd)),
        };
        let x = r(din);
        let h = r(hd);
        let c = r(hd);
        let (h1, c1) = lstm_step(&x, &h, &c, &p).unwrap();

        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        for j in 0..hd {
            let gate = |blk: usize| {
                let row = blk * hd + j;
                let mut z = p.bias.data()[row];
                for k in 0..din {
                    z += p.w_x.data()[row * din + k] * x[k];
                }
                for k in 0..hd {
                    z += p.w_h.data()[row * hd + k] * h[k];
                }
                z
            };
            let cj = sig(gate(1)) * c[j] + sig(gate(0)) * gate(2).tanh();
            let hj = sig(gate(3)) * cj.tanh();
            assert!((c1[j] - cj).abs() < 1e-14);
            assert!((h1[j] - hj).abs() < 1e-14);
        }
    }

    #[test]
    fn lstm_dimension_mismatch() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_step(&[0.0; 2], &[0.0; 2], &[0.0; 2], &p).is_err());
        assert!(lstm_step(&[0.0; 3], &[0.0; 1], &[0.0; 2], &p).is_err());
    }
}
