use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Example, Model, QuestionExamples};
use crate::error::{Error, Result};
use crate::numerics::{OptimizerState, ParamGrads};
use crate::util::{fnv1a, mix_seed};

/// Stops after `patience` consecutive epochs without a strictly better score.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Records the score of `epoch`; returns `(improved, stop)`.
    pub fn update(&mut self, epoch: usize, score: f64) -> (bool, bool) {
        let improved = self.best.is_none_or(|b| score > b);
        if improved {
            self.best = Some(score);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        (improved, self.bad_epochs >= self.patience)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub best_so_far: f64,
    pub stopped: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best dev epoch.
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub predicted_label: String,
    pub correct: Option<bool>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<Prediction>,
}

/// Highest-scoring choice of each question; ties go to the lowest label.
pub fn predict(model: &Model, questions: &[QuestionExamples]) -> Result<Vec<Prediction>> {
    questions
        .par_iter()
        .map(|q| {
            let mut order: Vec<usize> = (0..q.choices.len()).collect();
            order.sort_by(|&a, &b| q.choices[a].choice_label.cmp(&q.choices[b].choice_label));
            let scores = q
                .choices
                .iter()
                .map(|c| model.score(&c.s, &c.graph))
                .collect::<Result<Vec<f64>>>()?;
            let mut best = *order.first().ok_or_else(|| Error::Record {
                id: q.question_id.clone(),
                message: "no choices".into(),
            })?;
            for &i in &order[1..] {
                if scores[i] > scores[best] {
                    best = i;
                }
            }
            let predicted_label = q.choices[best].choice_label.clone();
            let correct = q.answer.as_ref().map(|a| *a == predicted_label);
            Ok(Prediction {
                question_id: q.question_id.clone(),
                predicted_label,
                correct,
                scores,
            })
        })
        .collect()
}

/// Probability of every statement, in question then label order.
pub fn score_statements(model: &Model, questions: &[QuestionExamples]) -> Result<Vec<(String, f64)>> {
    let per_question = questions
        .par_iter()
        .map(|q| {
            q.choices
                .iter()
                .map(|c| Ok((c.statement_id.clone(), model.score(&c.s, &c.graph)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_question.into_iter().flatten().collect())
}

pub fn accuracy(predictions: &[Prediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().filter(|p| p.correct == Some(true)).count();
    hits as f64 / predictions.len() as f64
}

/// Accuracy and predictions on a labelled split.
pub fn evaluate(model: &Model, questions: &[QuestionExamples]) -> Result<Evaluation> {
    if let Some(q) = questions.iter().find(|q| q.answer.is_none()) {
        return Err(Error::Record {
            id: q.question_id.clone(),
            message: "missing answerKey".into(),
        });
    }
    let predictions = predict(model, questions)?;
    Ok(Evaluation {
        accuracy: accuracy(&predictions),
        predictions,
    })
}

pub fn write_predictions_csv<W: Write>(w: W, predictions: &[Prediction]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Format(format!("writing predictions: {e}"));
    out.write_record(["question_id", "predicted_label", "correct"]).map_err(csv_err)?;
    for p in predictions {
        let correct = p.correct.map_or(String::new(), |c| c.to_string());
        out.write_record([p.question_id.as_str(), p.predicted_label.as_str(), correct.as_str()])
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(format!("writing predictions: {e}")))
}

/// Minibatch training with per-epoch dev evaluation and early stopping. Statement
/// gradients are computed in parallel and summed in batch order, so results do not
/// depend on the thread count.
pub fn train(mut model: Model, train: &[QuestionExamples], dev: &[QuestionExamples]) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    cfg.validate()?;
    if dev.is_empty() {
        return Err(Error::Invalid("dev split is empty".into()));
    }
    let examples: Vec<&Example> = train.iter().flat_map(|q| &q.choices).collect();
    if examples.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let opt = cfg.optimizer_config();
    let mut states: Vec<OptimizerState> = model.store.tensors().iter().map(|t| OptimizerState::new(opt, t)).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, fnv1a(b"shuffle"), epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(f64, ParamGrads)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(examples[i]))
                .collect::<Result<_>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut grad = model.store.zeros_like();
            let mut batch_loss = 0.0;
            for (loss, pg) in &results {
                batch_loss += loss;
                pg.accumulate_into(&mut grad, scale);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite(format!("loss {batch_loss} in epoch {epoch}, batch {}", b + 1)));
            }
            total += batch_loss;
            for ((param, g), st) in model.store.tensors_mut().iter_mut().zip(&grad).zip(&mut states) {
                st.step(param, g)?;
            }
        }
        let train_loss = total / examples.len() as f64;
        let dev_accuracy = evaluate(&model, dev)?.accuracy;
        let (improved, stop) = stopper.update(epoch, dev_accuracy);
        if improved {
            best = model.clone();
        }
        let stopped = stop || epoch == cfg.max_epochs;
        let entry = EpochLog {
            epoch,
            train_loss,
            dev_accuracy,
            best_so_far: stopper.best.unwrap_or(dev_accuracy),
            stopped,
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.4}, dev {dev_accuracy:.4}, best {:.4}",
            entry.best_so_far
        );
        log.push(entry);
        if stop {
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch: stopper.best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ConceptVocab, EncoderKind};
    use crate::model::TrainConfig;
    use crate::schema::SchemaGraph;

    #[test]
    fn patience_rule() {
        let mut es = EarlyStopping::new(3);
        let decisions: Vec<(bool, bool)> = [0.5, 0.6, 0.6, 0.6, 0.6]
            .iter()
            .enumerate()
            .map(|(i, s)| es.update(i + 1, *s))
            .collect();
        assert_eq!(
            decisions,
            [(true, false), (true, false), (false, false), (false, false), (false, true)]
        );
        assert_eq!(es.best_epoch, 2);
    }

    fn empty_graph() -> SchemaGraph {
        SchemaGraph {
            statement_ref: String::new(),
            nodes: Vec::new(),
            edges: Default::default(),
            paths: Vec::new(),
            truncated: false,
        }
    }

    fn question(id: &str, answer: Option<&str>, s: [[f64; 2]; 5]) -> QuestionExamples {
        let labels = ["A", "B", "C", "D", "E"];
        QuestionExamples {
            question_id: id.into(),
            answer: answer.map(Into::into),
            choices: labels
                .iter()
                .zip(s)
                .map(|(l, v)| Example {
                    statement_id: format!("{id}:{l}"),
                    choice_label: (*l).into(),
                    s: v.to_vec(),
                    graph: empty_graph(),
                    label: answer.map(|a| a == *l),
                })
                .collect(),
        }
    }

    fn linear_model(weight: [f64; 2]) -> Model {
        let cfg = TrainConfig {
            encoder: EncoderKind::None,
            d_s: 2,
            d_c: 1,
            ..TrainConfig::default()
        };
        let mut m = Model::new(cfg, ConceptVocab::default(), 1).unwrap();
        let w = m.store.get_mut(m.classifier.weight);
        w.data_mut().copy_from_slice(&[weight[0], weight[1], 0.0]);
        m
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let m = linear_model([1.0, 0.0]);
        let rising = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]];
        let qs = vec![
            question("a", Some("E"), rising),
            question("b", Some("E"), rising),
            question("c", Some("A"), rising),
            question("d", Some("B"), rising),
        ];
        let ev = evaluate(&m, &qs).unwrap();
        assert_eq!(ev.accuracy, 0.5);
        assert!(ev.predictions.iter().all(|p| p.predicted_label == "E"));
    }

    #[test]
    fn constant_scorer_picks_first_label() {
        let m = linear_model([0.0, 0.0]);
        let any = [[0.3, 1.0], [1.0, 0.2], [2.0, 0.0], [3.0, -1.0], [4.0, 9.0]];
        let qs: Vec<_> = ["A", "C", "A", "D"]
            .iter()
            .enumerate()
            .map(|(i, a)| question(&i.to_string(), Some(a), any))
            .collect();
        let ev = evaluate(&m, &qs).unwrap();
        assert!(ev.predictions.iter().all(|p| p.predicted_label == "A"));
        assert_eq!(ev.accuracy, 0.5);
    }

    #[test]
    fn evaluation_requires_answers() {
        let m = linear_model([1.0, 0.0]);
        let qs = vec![question("x", None, [[0.0; 2]; 5])];
        assert!(matches!(evaluate(&m, &qs), Err(Error::Record { .. })));
        assert_eq!(predict(&m, &qs).unwrap()[0].correct, None);
    }

    #[test]
    fn csv_layout() {
        let preds = vec![
            Prediction {
                question_id: "q1".into(),
                predicted_label: "B".into(),
                correct: Some(true),
                scores: vec![],
            },
            Prediction {
                question_id: "q,2".into(),
                predicted_label: "A".into(),
                correct: None,
                scores: vec![],
            },
        ];
        let mut out = Vec::new();
        write_predictions_csv(&mut out, &preds).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "question_id,predicted_label,correct\nq1,B,true\n\"q,2\",A,\n"
        );
    }

    fn separable(n: usize, seed: u64) -> Vec<QuestionExamples> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let answer = rng.gen_range(0..5);
                let mut s = [[0.0; 2]; 5];
                for (j, v) in s.iter_mut().enumerate() {
                    *v = [rng.gen_range(-1.0..1.0), if j == answer { 1.0 } else { -1.0 }];
                }
                question(&format!("q{i}"), Some(["A", "B", "C", "D", "E"][answer]), s)
            })
            .collect()
    }

    #[test]
    fn learns_separable_toy_and_is_deterministic() {
        let cfg = TrainConfig {
            encoder: EncoderKind::None,
            d_s: 2,
            d_c: 1,
            learning_rate: 0.05,
            batch_size: 8,
            max_epochs: 30,
            seed: 5,
            ..TrainConfig::default()
        };
        let (tr, dev) = (separable(60, 1), separable(20, 2));
        let run = || train(Model::new(cfg.clone(), ConceptVocab::default(), 1).unwrap(), &tr, &dev).unwrap();
        let a = run();
        assert!(evaluate(&a.model, &tr).unwrap().accuracy >= 0.95);
        let b = run();
        assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());
        assert!(a.log.windows(2).all(|w| w[1].best_so_far >= w[0].best_so_far));
        assert!(a.log.last().unwrap().stopped);
    }
}
