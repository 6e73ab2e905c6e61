//! Seeded toy knowledge graphs and question sets with a known answer rule: the correct
//! choice is the only one within two hops of the question concept. Concepts form
//! disjoint cycles with identical degree, so no concept is a priori more likely to be an
//! answer and text alone carries no signal.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Cursor;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Choice, DatasetSplit, Question, QuestionRecord, LABELS};
use crate::error::{Error, Result};
use crate::grounding::{is_stopword, lemmatize};
use crate::kg::{load_kg_from_reader, KnowledgeGraph, LoadOptions};

const RELATIONS: [&str; 4] = ["AtLocation", "UsedFor", "RelatedTo", "IsA"];
const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v"];
const VOWELS: [&str; 4] = ["a", "i", "o", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub cluster_size: usize,
    pub questions: usize,
    pub dev_questions: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            clusters: 20,
            cluster_size: 5,
            questions: 200,
            dev_questions: 40,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    /// Triples in the four-column tab-separated input format.
    pub kg_tsv: String,
    pub kg: KnowledgeGraph,
    pub train: DatasetSplit,
    pub dev: DatasetSplit,
    pub concepts: Vec<String>,
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..3)
            .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
            .collect();
        if !is_stopword(&w) && lemmatize(&w) == w && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.cluster_size < 3 || cfg.cluster_size > 5 || cfg.clusters < 5 {
        return Err(Error::Invalid(
            "clusters must be 3 to 5 concepts (so two hops reach the whole cycle) and at least 5 clusters".into(),
        ));
    }
    if cfg.dev_questions >= cfg.questions {
        return Err(Error::Invalid("dev_questions must be smaller than questions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.clusters * cfg.cluster_size;
    let concepts = words(&mut rng, n);
    let cluster = |i: usize| i / cfg.cluster_size;

    let mut tsv = String::new();
    for c in 0..cfg.clusters {
        let base = c * cfg.cluster_size;
        for j in 0..cfg.cluster_size {
            let (mut h, mut t) = (base + j, base + (j + 1) % cfg.cluster_size);
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut h, &mut t);
            }
            let rel = RELATIONS.choose(&mut rng).unwrap();
            writeln!(tsv, "/r/{rel}\t/c/en/{}\t/c/en/{}/n\t1.0", concepts[h], concepts[t]).unwrap();
        }
    }
    let kg = load_kg_from_reader(Cursor::new(tsv.as_bytes()), Path::new("<synthetic>"), &LoadOptions::default())?;

    let mut records = Vec::with_capacity(cfg.questions);
    for qi in 0..cfg.questions {
        let q = rng.gen_range(0..n);
        let c = cluster(q);
        let mates: Vec<usize> = (c * cfg.cluster_size..(c + 1) * cfg.cluster_size).filter(|&x| x != q).collect();
        let answer = *mates.choose(&mut rng).unwrap();
        let others: Vec<usize> = (0..n).filter(|&x| cluster(x) != c).collect();
        let mut choices: Vec<usize> = others.choose_multiple(&mut rng, LABELS.len() - 1).copied().collect();
        let slot = rng.gen_range(0..LABELS.len());
        choices.insert(slot, answer);
        records.push(QuestionRecord {
            id: format!("syn-{qi:04}"),
            question: Question {
                stem: format!("Which one is linked to {}?", concepts[q]),
                choices: LABELS
                    .iter()
                    .zip(&choices)
                    .map(|(l, &x)| Choice {
                        label: (*l).into(),
                        text: concepts[x].clone(),
                    })
                    .collect(),
            },
            answer_key: Some(LABELS[slot].into()),
        });
    }
    let dev = records.split_off(cfg.questions - cfg.dev_questions);
    Ok(SyntheticData {
        kg_tsv: tsv,
        kg,
        train: DatasetSplit { questions: records },
        dev: DatasetSplit { questions: dev },
        concepts,
    })
}
