//! Schema-graph encoders. Both run on a [`Tape`] so the classifier loss can be
//! back-propagated into every encoder parameter and into the statement vector.

pub mod kagnet;
pub mod mhgrn;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::ConceptId;
use crate::numerics::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::schema::SchemaGraph;

pub use kagnet::{encode_graph_kagnet, kagnet_backward, KagnetParams};
pub use mhgrn::{encode_graph_mhgrn, mhgrn_backward, MhgrnParams, MhgrnTrace};

/// Bound of the uniform initialisation of concept embeddings.
pub const CONCEPT_INIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Kagnet,
    Mhgrn,
    None,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kagnet => "kagnet",
            Self::Mhgrn => "mhgrn",
            Self::None => "none",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kagnet" => Ok(Self::Kagnet),
            "mhgrn" => Ok(Self::Mhgrn),
            "none" => Ok(Self::None),
            _ => Err(Error::Invalid(format!("unknown encoder {s:?}"))),
        }
    }
}

/// Row assignment for concept embedding tables. Row 0 is the shared unknown row.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptVocab {
    concepts: Vec<ConceptId>,
    index: HashMap<ConceptId, usize>,
}

impl ConceptVocab {
    pub fn new(concepts: impl IntoIterator<Item = ConceptId>) -> Self {
        let mut concepts: Vec<ConceptId> = concepts.into_iter().collect();
        concepts.sort_unstable();
        concepts.dedup();
        let index = concepts.iter().enumerate().map(|(i, c)| (*c, i + 1)).collect();
        Self { concepts, index }
    }

    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a SchemaGraph>) -> Self {
        Self::new(graphs.into_iter().flat_map(|g| g.concepts()))
    }

    /// Number of table rows, including the unknown row.
    pub fn rows(&self) -> usize {
        self.concepts.len() + 1
    }

    pub fn row(&self, c: ConceptId) -> usize {
        self.index.get(&c).copied().unwrap_or(0)
    }

    pub fn concepts(&self) -> &[ConceptId] {
        &self.concepts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_s: usize,
    pub d_c: usize,
    pub d_p: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            d_s: 64,
            d_c: 32,
            d_p: 64,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        if self.d_s == 0 || self.d_c == 0 || self.d_p == 0 {
            return Err(Error::Invalid(format!("dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

/// Glorot-uniform matrix `rows x cols`.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    uniform(rng, &[rows, cols], (6.0 / (rows + cols) as f64).sqrt())
}

pub(crate) fn insert(store: &mut ParamStore, name: String, t: Tensor) -> Result<ParamId> {
    store.insert(name, t)
}

pub(crate) fn check_statement(tape: &Tape, s: Var, d_s: usize) -> Result<()> {
    let n = tape.value(s).len();
    if n != d_s {
        return Err(Error::dim(format!("statement vector has {n} values, encoder expects {d_s}")));
    }
    Ok(())
}

pub(crate) fn local_index(sg: &SchemaGraph, c: ConceptId) -> Result<usize> {
    sg.node_index(c)
        .ok_or_else(|| Error::Invalid(format!("{}: path node {} is not a graph node", sg.statement_ref, c.0)))
}

/// `Σ_i w_i x_i` for a weight vector node `w` and equally sized vectors `xs`.
pub(crate) fn weighted_sum(tape: &mut Tape, w: Var, xs: &[Var]) -> Result<Var> {
    let mut terms = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        let wi = tape.pick(w, i);
        terms.push(tape.scale_by(wi, x)?);
    }
    tape.sum(&terms)
}

/// Graph encoder parameters of a model, or none for the text-only baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphEncoder {
    Kagnet(KagnetParams),
    Mhgrn(MhgrnParams),
    None { d_g: usize },
}

impl GraphEncoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Self::Kagnet(_) => EncoderKind::Kagnet,
            Self::Mhgrn(_) => EncoderKind::Mhgrn,
            Self::None { .. } => EncoderKind::None,
        }
    }

    /// Dimension of the graph vector.
    pub fn out_dim(&self) -> usize {
        match self {
            Self::Kagnet(p) => p.dims.d_p,
            Self::Mhgrn(p) => p.dims.d_c,
            Self::None { d_g } => *d_g,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &ConceptVocab,
        sg: &SchemaGraph,
        s: Var,
    ) -> Result<Var> {
        match self {
            Self::Kagnet(p) => Ok(p.forward(tape, store, vocab, sg, s)?.0),
            Self::Mhgrn(p) => Ok(p.forward(tape, store, vocab, sg, s)?.0),
            Self::None { d_g } => Ok(tape.input(Tensor::zeros(&[*d_g]))),
        }
    }
}
