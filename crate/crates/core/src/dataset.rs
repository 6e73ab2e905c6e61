//! CommonsenseQA-style question files: one JSON object per line,
//! `{"id", "question": {"stem", "choices": [{"label", "text"}]}, "answerKey"?}`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHOICES_PER_QUESTION: usize = 5;
pub const LABELS: [&str; CHOICES_PER_QUESTION] = ["A", "B", "C", "D", "E"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub stem: String,
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub question: Question,
    #[serde(rename = "answerKey", default, skip_serializing_if = "Option::is_none")]
    pub answer_key: Option<String>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::Record {
            id: self.id.clone(),
            message: m,
        };
        let choices = &self.question.choices;
        if choices.len() != CHOICES_PER_QUESTION {
            return Err(bad(format!(
                "expected {CHOICES_PER_QUESTION} choices, found {}",
                choices.len()
            )));
        }
        let mut labels: Vec<&str> = choices.iter().map(|c| c.label.as_str()).collect();
        labels.sort_unstable();
        if labels != LABELS {
            return Err(bad(format!("choice labels must be A-E, found {labels:?}")));
        }
        if self.question.stem.trim().is_empty() {
            return Err(bad("empty stem".into()));
        }
        if let Some(k) = &self.answer_key {
            if !LABELS.contains(&k.as_str()) {
                return Err(bad(format!("answerKey {k:?} is not a choice label")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub questions: Vec<QuestionRecord>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn is_labeled(&self) -> bool {
        self.questions.iter().all(|q| q.answer_key.is_some())
    }
}

pub fn load_dataset(path: &Path) -> Result<DatasetSplit> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(f), path)
}

pub fn parse_dataset<R: BufRead>(reader: R, path: &Path) -> Result<DatasetSplit> {
    let mut questions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rec.validate()?;
        questions.push(rec);
    }
    log::info!("{}: {} questions", path.display(), questions.len());
    Ok(DatasetSplit { questions })
}
