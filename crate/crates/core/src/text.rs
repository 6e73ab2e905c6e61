//! Question/choice statements and the text-encoder contract that stands in for a
//! pretrained language model's sentence vector.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::QuestionRecord;
use crate::error::{Error, Result};
use crate::grounding::normalize;
use crate::schema::statement_id;
use crate::util::fnv1a;

const INTERROGATIVES: &[&str] = &["how", "what", "when", "where", "which", "who", "whom", "why"];

fn core_word(w: &str) -> (usize, usize) {
    let start = w.find(|c: char| c.is_alphanumeric()).unwrap_or(w.len());
    let end = w.rfind(|c: char| c.is_alphanumeric()).map_or(start, |i| i + w[i..].chars().next().unwrap().len_utf8());
    (start, end.max(start))
}

fn contains_phrase(haystack: &str, needle: &str) -> bool {
    let norm = |s: &str| -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    };
    let (h, n) = (norm(haystack), norm(needle));
    !n.is_empty() && h.windows(n.len()).any(|w| w == n.as_slice())
}

/// Declarative form of a question/choice pair: the first interrogative word is replaced
/// by the choice and the trailing question mark dropped. Without an interrogative the
/// choice is appended, unless the text is already a statement (no question mark) that
/// contains the choice.
pub fn make_statement(question: &str, choice: &str) -> String {
    let trimmed = question.trim();
    let asked = trimmed.ends_with('?');
    let body = trimmed.trim_end_matches('?').trim_end();
    let choice = choice.trim();
    let mut words: Vec<String> = body.split_whitespace().map(str::to_owned).collect();
    for w in words.iter_mut() {
        let (s, e) = core_word(w);
        if INTERROGATIVES.contains(&w[s..e].to_lowercase().as_str()) {
            *w = format!("{}{}{}", &w[..s], choice, &w[e..]);
            return words.join(" ");
        }
    }
    if !asked && contains_phrase(body, choice) {
        return body.to_owned();
    }
    if body.is_empty() {
        choice.to_owned()
    } else {
        format!("{body} {choice}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub question_id: String,
    pub choice_label: String,
    pub question_text: String,
    pub choice_text: String,
    pub declarative_text: String,
    /// `None` for unlabeled questions.
    pub is_answer: Option<bool>,
}

impl Statement {
    pub fn id(&self) -> String {
        statement_id(&self.question_id, &self.choice_label)
    }
}

/// One statement per choice, in file order.
pub fn question_to_pairs(q: &QuestionRecord) -> Result<Vec<Statement>> {
    q.validate()?;
    Ok(q.question
        .choices
        .iter()
        .map(|c| Statement {
            question_id: q.id.clone(),
            choice_label: c.label.clone(),
            question_text: q.question.stem.clone(),
            choice_text: c.text.clone(),
            declarative_text: make_statement(&q.question.stem, &c.text),
            is_answer: q.answer_key.as_ref().map(|k| *k == c.label),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementVector(pub Vec<f64>);

impl StatementVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> StatementVector;
}

/// Feature hashing of lemmas into `dim` signed buckets, L2 normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedBagOfWords {
    dim: usize,
}

impl HashedBagOfWords {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("encoder dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    fn bucket(&self, lemma: &str) -> (usize, f64) {
        let h = fnv1a(lemma.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }
}

impl TextEncoder for HashedBagOfWords {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> StatementVector {
        let mut lemmas = normalize(text).lemmas;
        let mut v = vec![0.0; self.dim];
        if lemmas.is_empty() {
            return StatementVector(v);
        }
        for l in &lemmas {
            let (i, s) = self.bucket(l);
            v[i] += s;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // signs cancelled exactly; fall back to the smallest lemma's bucket
            lemmas.sort();
            let (i, s) = self.bucket(&lemmas[0]);
            v[i] = s;
            return StatementVector(v);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        StatementVector(v)
    }
}

/// Mean of per-token vectors from a whitespace-separated text file
/// (`token v1 v2 ... vd` per line). Tokens are looked up as written, then by lemma.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEmbeddings {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileEmbeddings {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(f), path)
    }

    pub fn from_reader<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut parts = line.split_whitespace();
            let Some(tok) = parts.next() else { continue };
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let parse = |m: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: m,
            };
            let vals = vals.map_err(|e| parse(e.to_string()))?;
            let d = *dim.get_or_insert(vals.len());
            if vals.len() != d || d == 0 {
                return Err(parse(format!("vector has {} values, expected {d}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(parse("non-finite value".into()));
            }
            vectors.insert(tok.to_lowercase(), vals);
        }
        let dim = dim.ok_or_else(|| Error::Invalid(format!("{}: no vectors", path.display())))?;
        Ok(Self { dim, vectors })
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl TextEncoder for FileEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> StatementVector {
        let seq = normalize(text);
        let mut v = vec![0.0; self.dim];
        let mut n = 0usize;
        for (t, l) in seq.tokens.iter().zip(&seq.lemmas) {
            if let Some(e) = self.get(t).or_else(|| self.get(l)) {
                v.iter_mut().zip(e).for_each(|(a, b)| *a += b);
                n += 1;
            }
        }
        if n > 0 {
            v.iter_mut().for_each(|x| *x /= n as f64);
        }
        StatementVector(v)
    }
}

/// Externally computed statement vectors, one JSON object per line:
/// `{"statement_id": "q1:A", "vector": [...]}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct VectorLine {
    statement_id: String,
    vector: Vec<f64>,
}

impl PrecomputedVectors {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |m: String| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: m,
            };
            let v: VectorLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            let d = *dim.get_or_insert(v.vector.len());
            if v.vector.len() != d || d == 0 {
                return Err(parse(format!("vector has {} values, expected {d}", v.vector.len())));
            }
            vectors.insert(v.statement_id, v.vector);
        }
        let dim = dim.ok_or_else(|| Error::Invalid(format!("{}: no vectors", path.display())))?;
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, statement_id: &str) -> Option<StatementVector> {
        self.vectors.get(statement_id).map(|v| StatementVector(v.clone()))
    }
}

/// Source of statement vectors for a run.
pub enum StatementEncoder {
    Text(Box<dyn TextEncoder>),
    Precomputed(PrecomputedVectors),
}

impl StatementEncoder {
    pub fn hashed(dim: usize) -> Result<Self> {
        Ok(Self::Text(Box::new(HashedBagOfWords::new(dim)?)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Text(e) => e.dim(),
            Self::Precomputed(p) => p.dim(),
        }
    }

    pub fn encode(&self, s: &Statement) -> Result<StatementVector> {
        match self {
            Self::Text(e) => Ok(e.encode(&s.declarative_text)),
            Self::Precomputed(p) => p.get(&s.id()).ok_or_else(|| Error::Record {
                id: s.id(),
                message: "no precomputed statement vector".into(),
            }),
        }
    }
}

pub fn encode_statement(encoder: &dyn TextEncoder, text: &str) -> StatementVector {
    encoder.encode(text)
}
