//! Statement/graph classifier, training loop, evaluation and checkpoints.

mod checkpoint;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::kagnet::DEFAULT_GCN_LAYERS;
use crate::encoder::{uniform, ConceptVocab, Dims, EncoderKind, GraphEncoder, KagnetParams, MhgrnParams};
use crate::error::{Error, Result};
use crate::numerics::{bce_value, sigmoid, OptimizerConfig, OptimizerKind, ParamGrads, ParamId, ParamStore, Tape, Tensor};
use crate::schema::{SchemaGraph, DEFAULT_K, DEFAULT_MAX_PATHS_PER_PAIR};
use crate::util::{fnv1a, mix_seed};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{
    accuracy, evaluate, predict, score_statements, train, write_predictions_csv, EarlyStopping, EpochLog, Evaluation, Prediction,
    TrainOutcome,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub encoder: EncoderKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub k: usize,
    pub max_paths_per_pair: usize,
    pub k_hop: usize,
    pub gcn_layers: usize,
    pub sge: bool,
    pub seed: u64,
    pub d_s: usize,
    pub d_c: usize,
    pub d_p: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let dims = Dims::default();
        Self {
            encoder: EncoderKind::Mhgrn,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 50,
            patience: 3,
            k: DEFAULT_K,
            max_paths_per_pair: DEFAULT_MAX_PATHS_PER_PAIR,
            k_hop: DEFAULT_K,
            gcn_layers: DEFAULT_GCN_LAYERS,
            sge: false,
            seed: 0,
            d_s: dims.d_s,
            d_c: dims.d_c,
            d_p: dims.d_p,
        }
    }
}

impl TrainConfig {
    pub fn dims(&self) -> Dims {
        Dims {
            d_s: self.d_s,
            d_c: self.d_c,
            d_p: self.d_p,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.optimizer, self.learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        self.optimizer_config().validate()?;
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("k", self.k),
            ("max_paths_per_pair", self.max_paths_per_pair),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Invalid(format!("{name} must be positive")));
            }
        }
        if self.encoder == EncoderKind::Mhgrn && self.k_hop == 0 {
            return Err(Error::Invalid("k_hop must be at least 1 for the mhgrn encoder".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierParams {
    /// `d_s + d_g`
    pub weight: ParamId,
    /// `1`
    pub bias: ParamId,
}

/// Largest probability below 1; `sigmoid` rounds to exactly 1.0 beyond about 37.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Keeps saturated sigmoid outputs inside the open unit interval.
pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, P_MAX)
}

/// `sigmoid(weight · [s; g] + bias)`, strictly inside `(0, 1)`.
pub fn score_pair(s: &[f64], g: &[f64], weight: &[f64], bias: f64) -> Result<f64> {
    if s.len() + g.len() != weight.len() {
        return Err(Error::dim(format!(
            "classifier weight has {} entries, input has {} + {}",
            weight.len(),
            s.len(),
            g.len()
        )));
    }
    let z: f64 = s.iter().chain(g).zip(weight).map(|(x, w)| x * w).sum::<f64>() + bias;
    Ok(clamp_probability(sigmoid(z)))
}

pub fn bce_loss(p: f64, y: bool) -> f64 {
    bce_value(p, if y { 1.0 } else { 0.0 })
}

/// One question/choice statement ready for scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub statement_id: String,
    pub choice_label: String,
    pub s: Vec<f64>,
    pub graph: SchemaGraph,
    pub label: Option<bool>,
}

/// The five statements of one question, ordered by choice label.
#[derive(Debug, Clone, PartialEq)]
pub struct QuestionExamples {
    pub question_id: String,
    pub answer: Option<String>,
    pub choices: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: TrainConfig,
    pub vocab: ConceptVocab,
    pub relations: usize,
    pub store: ParamStore,
    pub encoder: GraphEncoder,
    pub classifier: ClassifierParams,
}

impl Model {
    /// Freshly initialised parameters, seeded from `config.seed`.
    pub fn new(config: TrainConfig, vocab: ConceptVocab, relations: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[config.seed, fnv1a(b"init")]));
        let mut store = ParamStore::new();
        let dims = config.dims();
        let relations = relations.max(1);
        let encoder = match config.encoder {
            EncoderKind::Kagnet => GraphEncoder::Kagnet(KagnetParams::init(
                &mut store,
                vocab.rows(),
                relations,
                dims,
                config.gcn_layers,
                &mut rng,
            )?),
            EncoderKind::Mhgrn => GraphEncoder::Mhgrn(MhgrnParams::init(
                &mut store,
                vocab.rows(),
                relations,
                dims,
                config.k_hop,
                &mut rng,
            )?),
            EncoderKind::None => GraphEncoder::None { d_g: dims.d_c },
        };
        let width = dims.d_s + encoder.out_dim();
        let weight = store.insert(
            "classifier.weight",
            uniform(&mut rng, &[width], 1.0 / (width as f64).sqrt()),
        )?;
        let bias = store.insert("classifier.bias", Tensor::zeros(&[1]))?;
        Ok(Self {
            config,
            vocab,
            relations,
            store,
            encoder,
            classifier: ClassifierParams { weight, bias },
        })
    }

    fn forward(&self, tape: &mut Tape, s: &[f64], sg: &SchemaGraph) -> Result<crate::numerics::Var> {
        let sv = tape.input(Tensor::vector(s.to_vec()));
        let g = self.encoder.forward(tape, &self.store, &self.vocab, sg, sv)?;
        let x = tape.concat(&[sv, g]);
        let w = tape.param(&self.store, self.classifier.weight);
        let b = tape.param(&self.store, self.classifier.bias);
        let z = tape.dot(w, x)?;
        let z = tape.add(z, b)?;
        Ok(tape.sigmoid(z))
    }

    /// Probability that the statement is true.
    pub fn score(&self, s: &[f64], sg: &SchemaGraph) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.forward(&mut tape, s, sg)?;
        Ok(clamp_probability(tape.scalar(p)))
    }

    /// Loss of one labelled statement and its parameter gradients.
    pub fn loss_and_grads(&self, ex: &Example) -> Result<(f64, ParamGrads)> {
        let y = ex.label.ok_or_else(|| Error::Record {
            id: ex.statement_id.clone(),
            message: "statement has no label".into(),
        })?;
        let mut tape = Tape::new();
        let p = self.forward(&mut tape, &ex.s, &ex.graph)?;
        let loss = tape.bce(p, if y { 1.0 } else { 0.0 });
        let grads = tape.backward(loss, &[1.0])?;
        Ok((tape.scalar(loss), tape.param_grads(&grads)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::testing::{random_graph, random_vec};
    use crate::kg::ConceptId;
    use crate::numerics::grad_check;
    use rand::Rng;

    #[test]
    fn zero_weight_scores_half() {
        assert_eq!(score_pair(&[1.0, -2.0], &[3.0], &[0.0; 3], 0.0).unwrap(), 0.5);
        let high = score_pair(&[1.0], &[3.0], &[0.0; 2], 50.0).unwrap();
        assert!(high < 1.0 && 1.0 - high < 1e-15);
        let low = score_pair(&[1.0], &[3.0], &[0.0; 2], -800.0).unwrap();
        assert!(low > 0.0);
        assert!(score_pair(&[1.0], &[3.0], &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn score_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let s = random_vec(&mut rng, 5);
            let g = random_vec(&mut rng, 3);
            let w = random_vec(&mut rng, 8);
            let b = rng.gen_range(-1.0..1.0);
            let mut z = b;
            for i in 0..5 {
                z += s[i] * w[i];
            }
            for i in 0..3 {
                z += g[i] * w[5 + i];
            }
            let want = 1.0 / (1.0 + (-z).exp());
            let got = score_pair(&s, &g, &w, b).unwrap();
            assert!((got - want).abs() < 1e-15);
            assert!(got > 0.0 && got < 1.0);
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0 - 1e-13, true) < 1e-12);
        let (p, h) = (0.3, 1e-6);
        let numeric = (bce_loss(p + h, false) - bce_loss(p - h, false)) / (2.0 * h);
        // dL/dp = 1 / (1 - p) for y = 0
        let mut tape = Tape::new();
        let pv = tape.input(Tensor::vector(vec![p]));
        let l = tape.bce(pv, 0.0);
        let g = tape.backward(l, &[1.0]).unwrap();
        assert!((g.of(pv).unwrap()[0] - numeric).abs() < 1e-8);
        assert!((numeric - 1.0 / 0.7).abs() < 1e-8);
    }

    fn small_config(encoder: EncoderKind) -> TrainConfig {
        TrainConfig {
            encoder,
            d_s: 3,
            d_c: 4,
            d_p: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn full_model_gradients() {
        for encoder in [EncoderKind::Kagnet, EncoderKind::Mhgrn, EncoderKind::None] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let vocab = ConceptVocab::new((0..5).map(ConceptId));
            let mut model = Model::new(small_config(encoder), vocab, 2).unwrap();
            for t in model.store.tensors_mut() {
                t.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
            }
            let ex = Example {
                statement_id: "q:A".into(),
                choice_label: "A".into(),
                s: random_vec(&mut rng, 3),
                graph: random_graph(&mut rng, 5, 6, 2, 3),
                label: Some(true),
            };
            let (_, pg) = model.loss_and_grads(&ex).unwrap();
            let analytic = pg.to_dense(&model.store);
            let point = model.store.tensors().to_vec();
            let loss = |ts: &[Tensor]| -> Result<f64> {
                let mut m = model.clone();
                m.store.tensors_mut().clone_from_slice(ts);
                Ok(bce_loss(m.score(&ex.s, &ex.graph)?, true))
            };
            let report = grad_check(loss, &point, &analytic, 1e-5, 1e-4).unwrap();
            assert!(report.passed(), "{encoder}: {report:?}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"encoder":"kagnet","lr":1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"encoder":"none","optimizer":"radam"}"#).unwrap();
        assert_eq!(c.encoder, EncoderKind::None);
        assert_eq!(c.patience, 3);
    }
}
