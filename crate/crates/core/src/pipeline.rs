//! Stage functions shared by the command-line tools and in-process runs, plus JSON-lines
//! helpers. Every stage preserves input order, so parallel and serial runs agree.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::grounding::{ground_statement, GroundedRecord, DEFAULT_MAX_NGRAM};
use crate::kg::KnowledgeGraph;
use crate::model::{evaluate, train, Evaluation, Example, Model, QuestionExamples, TrainConfig, TrainOutcome};
use crate::schema::{expand_record, extract_record, ExtractionConfig, GraphRecord};
use crate::text::{question_to_pairs, StatementEncoder};
use crate::encoder::ConceptVocab;

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One grounded record per statement, in question then choice order.
pub fn ground_split(kg: &KnowledgeGraph, split: &DatasetSplit) -> Result<Vec<GroundedRecord>> {
    let per_question = split
        .questions
        .par_iter()
        .map(|q| {
            q.validate()?;
            Ok(q.question
                .choices
                .iter()
                .map(|c| ground_statement(kg, &q.id, &c.label, &q.question.stem, &c.text, DEFAULT_MAX_NGRAM))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_question.into_iter().flatten().collect())
}

pub fn extract_graphs(kg: &KnowledgeGraph, grounded: &[GroundedRecord], cfg: &ExtractionConfig) -> Vec<GraphRecord> {
    grounded.par_iter().map(|g| extract_record(kg, g, cfg)).collect()
}

pub fn expand_graphs(kg: &KnowledgeGraph, graphs: &[GraphRecord], seed: u64) -> Result<Vec<GraphRecord>> {
    graphs.par_iter().map(|g| expand_record(kg, g, seed)).collect()
}

/// Joins questions with their schema graphs and statement vectors.
pub fn assemble(
    kg: &KnowledgeGraph,
    split: &DatasetSplit,
    graphs: &[GraphRecord],
    encoder: &StatementEncoder,
) -> Result<Vec<QuestionExamples>> {
    let by_id: HashMap<String, &GraphRecord> = graphs.iter().map(|g| (g.statement_id(), g)).collect();
    split
        .questions
        .par_iter()
        .map(|q| {
            let mut choices = question_to_pairs(q)?
                .into_iter()
                .map(|st| {
                    let id = st.id();
                    let rec = by_id.get(&id).ok_or_else(|| Error::Record {
                        id: id.clone(),
                        message: "no schema graph for statement".into(),
                    })?;
                    let (graph, _) = rec.to_schema(kg)?;
                    Ok(Example {
                        statement_id: id,
                        choice_label: st.choice_label.clone(),
                        s: encoder.encode(&st)?.0,
                        graph,
                        label: st.is_answer,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            choices.sort_by(|a, b| a.choice_label.cmp(&b.choice_label));
            Ok(QuestionExamples {
                question_id: q.id.clone(),
                answer: q.answer_key.clone(),
                choices,
            })
        })
        .collect()
}

/// Grounding, extraction and (optionally) expansion of a split.
pub fn schema_graphs(kg: &KnowledgeGraph, split: &DatasetSplit, cfg: &TrainConfig) -> Result<Vec<GraphRecord>> {
    let grounded = ground_split(kg, split)?;
    let ext = ExtractionConfig {
        k: cfg.k,
        max_paths_per_pair: cfg.max_paths_per_pair,
    };
    let graphs = extract_graphs(kg, &grounded, &ext);
    if cfg.sge {
        expand_graphs(kg, &graphs, cfg.seed)
    } else {
        Ok(graphs)
    }
}

pub fn prepare(
    kg: &KnowledgeGraph,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    encoder: &StatementEncoder,
) -> Result<Vec<QuestionExamples>> {
    let graphs = schema_graphs(kg, split, cfg)?;
    assemble(kg, split, &graphs, encoder)
}

/// Fresh model whose vocabulary covers the training graphs.
pub fn init_model(kg: &KnowledgeGraph, train: &[QuestionExamples], cfg: &TrainConfig) -> Result<Model> {
    let vocab = ConceptVocab::from_graphs(train.iter().flat_map(|q| q.choices.iter().map(|c| &c.graph)));
    Model::new(cfg.clone(), vocab, kg.relation_count())
}

pub fn train_examples(
    kg: &KnowledgeGraph,
    train_set: &[QuestionExamples],
    dev_set: &[QuestionExamples],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let model = init_model(kg, train_set, cfg)?;
    train(model, train_set, dev_set)
}

/// Everything from raw splits to dev predictions in one process.
pub fn run_end_to_end(
    kg: &KnowledgeGraph,
    train_split: &DatasetSplit,
    dev_split: &DatasetSplit,
    cfg: &TrainConfig,
    encoder: &StatementEncoder,
) -> Result<(TrainOutcome, Evaluation)> {
    let tr = prepare(kg, train_split, cfg, encoder)?;
    let dev = prepare(kg, dev_split, cfg, encoder)?;
    let outcome = train_examples(kg, &tr, &dev, cfg)?;
    let ev = evaluate(&outcome.model, &dev)?;
    Ok((outcome, ev))
}
