//! Text normalization and concept grounding by longest lemma n-gram match.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::kg::{ConceptId, KnowledgeGraph};

pub const DEFAULT_MAX_NGRAM: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub lemmas: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Function words never grounded as unigrams.
const STOPWORDS: &[&str] = &[
    "a", "about", "all", "an", "and", "any", "as", "at", "be", "but", "by", "can", "could", "do",
    "for", "from", "have", "he", "her", "him", "his", "how", "i", "if", "in", "into", "it", "its",
    "me", "my", "no", "not", "of", "on", "or", "our", "out", "she", "should", "so", "some",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this", "those",
    "to", "too", "up", "very", "we", "what", "when", "where", "which", "who", "whom", "why",
    "will", "with", "would", "you", "your",
];

pub fn is_stopword(w: &str) -> bool {
    STOPWORDS.binary_search(&w).is_ok()
}

const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"),
    ("are", "be"),
    ("ate", "eat"),
    ("been", "be"),
    ("bought", "buy"),
    ("brought", "bring"),
    ("came", "come"),
    ("children", "child"),
    ("did", "do"),
    ("does", "do"),
    ("doing", "do"),
    ("done", "do"),
    ("eaten", "eat"),
    ("feet", "foot"),
    ("felt", "feel"),
    ("found", "find"),
    ("gave", "give"),
    ("geese", "goose"),
    ("given", "give"),
    ("goes", "go"),
    ("gone", "go"),
    ("got", "get"),
    ("had", "have"),
    ("has", "have"),
    ("held", "hold"),
    ("is", "be"),
    ("kept", "keep"),
    ("knew", "know"),
    ("known", "know"),
    ("made", "make"),
    ("men", "man"),
    ("mice", "mouse"),
    ("people", "person"),
    ("ran", "run"),
    ("said", "say"),
    ("sat", "sit"),
    ("saw", "see"),
    ("seen", "see"),
    ("stood", "stand"),
    ("taken", "take"),
    ("teeth", "tooth"),
    ("thought", "think"),
    ("took", "take"),
    ("was", "be"),
    ("went", "go"),
    ("were", "be"),
    ("women", "woman"),
    ("written", "write"),
    ("wrote", "write"),
];

fn has_vowel(s: &str) -> bool {
    s.bytes().any(|b| b"aeiouy".contains(&b))
}

/// `runn` → `run`, leaving `ll`, `ss`, `ff`, `zz` alone.
fn undouble(stem: &str) -> &str {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 3 && b[n - 1] == b[n - 2] && !b"aeiouylsfz".contains(&b[n - 1]) {
        &stem[..n - 1]
    } else {
        stem
    }
}

fn strip_once(w: &str) -> Option<String> {
    if let Ok(i) = IRREGULAR.binary_search_by_key(&w, |(k, _)| k) {
        return Some(IRREGULAR[i].1.to_owned());
    }
    if !w.is_ascii() {
        return None;
    }
    if w.len() >= 5 && w.ends_with("ies") {
        return Some(format!("{}y", &w[..w.len() - 3]));
    }
    if ["sses", "shes", "ches", "xes", "zes"].iter().any(|s| w.ends_with(s)) && w.len() >= 5 {
        return Some(w[..w.len() - 2].to_owned());
    }
    if w.len() >= 4 && w.ends_with('s') && !["ss", "us", "is"].iter().any(|s| w.ends_with(s)) {
        return Some(w[..w.len() - 1].to_owned());
    }
    if let Some(stem) = w.strip_suffix("ing") {
        if stem.len() >= 3 && has_vowel(stem) {
            return Some(undouble(stem).to_owned());
        }
    }
    if let Some(stem) = w.strip_suffix("ed") {
        if stem.len() >= 3 && has_vowel(stem) && !w.ends_with("eed") {
            return Some(undouble(stem).to_owned());
        }
    }
    None
}

/// Rule-based English lemmatizer: irregular forms, plural `-s/-es/-ies`, `-ing`, `-ed`
/// with doubled-consonant undo. Rules are applied until nothing changes, so the result
/// is a fixpoint.
pub fn lemmatize(word: &str) -> String {
    let mut w = word.to_owned();
    // every rule shortens the word or maps into the irregular table's values, which are
    // themselves fixpoints, so this terminates
    while let Some(next) = strip_once(&w) {
        if next == w || next.is_empty() {
            break;
        }
        w = next;
    }
    w
}

/// Lowercases, splits on anything that is not alphanumeric and lemmatizes each token.
pub fn normalize(text: &str) -> TokenSequence {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect();
    let lemmas = tokens.iter().map(|t| lemmatize(t)).collect();
    TokenSequence { tokens, lemmas }
}

/// Concepts matched in a text, with the half-open token span each was matched at.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundedConcepts {
    pub concepts: BTreeSet<ConceptId>,
    pub spans: BTreeMap<ConceptId, (usize, usize)>,
}

impl GroundedConcepts {
    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

fn strictly_contains(outer: (usize, usize), inner: (usize, usize)) -> bool {
    outer != inner && outer.0 <= inner.0 && inner.1 <= outer.1
}

/// All lemma n-gram matches, before suppression, as `(start, end, concept)`.
fn raw_matches(kg: &KnowledgeGraph, seq: &TokenSequence, max_ngram: usize) -> Vec<(usize, usize, ConceptId)> {
    let mut out = Vec::new();
    let n = seq.lemmas.len();
    for start in 0..n {
        let mut key = String::new();
        for end in start + 1..=(start + max_ngram).min(n) {
            if end > start + 1 {
                key.push('_');
            }
            key.push_str(&seq.lemmas[end - 1]);
            if end == start + 1 && is_stopword(&key) {
                continue;
            }
            if let Some(c) = kg.concept_id(&key) {
                out.push((start, end, c));
            }
        }
    }
    out
}

pub fn ground_tokens(kg: &KnowledgeGraph, seq: &TokenSequence, max_ngram: usize) -> GroundedConcepts {
    let max_ngram = max_ngram.max(1);
    let mut matches = raw_matches(kg, seq, max_ngram);
    // a span is suppressed by a strictly longer span containing it; sort longest first so
    // only already-kept spans need checking
    matches.sort_by_key(|&(s, e, _)| (std::cmp::Reverse(e - s), s));
    let mut kept: Vec<(usize, usize, ConceptId)> = Vec::new();
    for m in matches {
        if !kept.iter().any(|k| strictly_contains((k.0, k.1), (m.0, m.1))) {
            kept.push(m);
        }
    }
    kept.sort_by_key(|&(s, e, _)| (s, e));
    let mut g = GroundedConcepts::default();
    for (s, e, c) in kept {
        g.concepts.insert(c);
        g.spans.entry(c).or_insert((s, e));
    }
    g
}

pub fn ground(kg: &KnowledgeGraph, text: &str, max_ngram: usize) -> GroundedConcepts {
    ground_tokens(kg, &normalize(text), max_ngram)
}

/// Grounded concept names for one statement; the interchange record between the
/// grounding and extraction stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedRecord {
    pub id: String,
    pub choice_label: String,
    pub question_concepts: Vec<String>,
    /// May hold one synthetic marker that is not a graph concept, see [`ground_statement`].
    pub answer_concepts: Vec<String>,
}

fn names(kg: &KnowledgeGraph, g: &GroundedConcepts) -> Vec<String> {
    g.concepts
        .iter()
        .filter_map(|c| kg.concept_name(*c).map(str::to_owned))
        .collect()
}

/// Grounds question and choice text. A choice with no match gets its underscore-joined
/// lemma string as a marker concept, so it still yields a (graph-less) statement.
pub fn ground_statement(
    kg: &KnowledgeGraph,
    id: &str,
    choice_label: &str,
    question_text: &str,
    choice_text: &str,
    max_ngram: usize,
) -> GroundedRecord {
    let q = ground(kg, question_text, max_ngram);
    let choice_seq = normalize(choice_text);
    let a = ground_tokens(kg, &choice_seq, max_ngram);
    let mut answer_concepts = names(kg, &a);
    if answer_concepts.is_empty() && !choice_seq.is_empty() {
        answer_concepts.push(choice_seq.lemmas.join("_"));
    }
    GroundedRecord {
        id: id.to_owned(),
        choice_label: choice_label.to_owned(),
        question_concepts: names(kg, &q),
        answer_concepts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::GraphBuilder;
    use proptest::prelude::*;

    fn vocab_kg(words: &[&str]) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for w in words {
            b.add_concept(w);
        }
        b.build()
    }

    #[test]
    fn tables_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
        assert!(IRREGULAR.windows(2).all(|w| w[0].0 < w[1].0));
        for (_, v) in IRREGULAR {
            assert_eq!(&lemmatize(v), v);
        }
    }

    #[test]
    fn normalize_example() {
        let s = normalize("Dogs barked loudly!");
        assert_eq!(s.tokens, ["dogs", "barked", "loudly"]);
        assert_eq!(s.lemmas, ["dog", "bark", "loudly"]);
        assert!(normalize("").is_empty());
    }

    #[test]
    fn lemmatizer_rules() {
        for (w, l) in [
            ("flies", "fly"),
            ("boxes", "box"),
            ("glasses", "glass"),
            ("running", "run"),
            ("falling", "fall"),
            ("stopped", "stop"),
            ("need", "need"),
            ("string", "string"),
            ("bus", "bus"),
            ("children", "child"),
            ("people", "person"),
            ("ran", "run"),
            ("cats", "cat"),
        ] {
            assert_eq!(lemmatize(w), l, "{w}");
        }
    }

    #[test]
    fn fountain_pen_longest_match() {
        let kg = vocab_kg(&["fountain_pen", "pen", "fountain"]);
        let g = ground(&kg, "a fountain pen", 4);
        let fp = kg.concept_id("fountain_pen").unwrap();
        assert_eq!(g.concepts.iter().copied().collect::<Vec<_>>(), vec![fp]);
        assert_eq!(g.spans[&fp], (1, 3));
    }

    #[test]
    fn no_overlap_is_empty() {
        let kg = vocab_kg(&["zebra"]);
        assert!(ground(&kg, "nothing here matches", 4).is_empty());
    }

    #[test]
    fn stopword_unigrams_skipped() {
        let kg = vocab_kg(&["a", "the", "the_end"]);
        let g = ground(&kg, "The end of a story", 4);
        assert_eq!(g.concepts.len(), 1);
        assert!(g.concepts.contains(&kg.concept_id("the_end").unwrap()));
    }

    #[test]
    fn choice_marker_fallback() {
        let kg = vocab_kg(&["ink"]);
        let r = ground_statement(&kg, "q1", "A", "what holds ink?", "Pencil Cases", 4);
        assert_eq!(r.question_concepts, ["ink"]);
        assert_eq!(r.answer_concepts, ["pencil_case"]);
    }

    /// Quadratic oracle: every span checked against the vocabulary list, then pairwise
    /// containment suppression.
    fn brute_force(vocab: &[String], seq: &TokenSequence, max_ngram: usize) -> BTreeMap<String, (usize, usize)> {
        let n = seq.lemmas.len();
        let mut found = Vec::new();
        for i in 0..n {
            for j in i + 1..=n {
                if j - i > max_ngram {
                    continue;
                }
                let key = seq.lemmas[i..j].join("_");
                if j - i == 1 && STOPWORDS.contains(&key.as_str()) {
                    continue;
                }
                if vocab.contains(&key) {
                    found.push((i, j, key));
                }
            }
        }
        let kept: Vec<_> = found
            .iter()
            .filter(|a| !found.iter().any(|b| (b.0, b.1) != (a.0, a.1) && b.0 <= a.0 && a.1 <= b.1))
            .cloned()
            .collect();
        let mut out = BTreeMap::new();
        for (i, j, k) in kept {
            out.entry(k).or_insert((i, j));
        }
        out
    }

    const WORDS: &[&str] = &["red", "pen", "ink", "box", "the", "cat", "sat", "mat"];

    proptest! {
        #[test]
        fn matches_brute_force(
            text in proptest::collection::vec(0usize..WORDS.len(), 0..12),
            vocab_spans in proptest::collection::vec(proptest::collection::vec(0usize..WORDS.len(), 1..4), 1..15),
            max_ngram in 1usize..5,
        ) {
            let text: Vec<&str> = text.iter().map(|&i| WORDS[i]).collect();
            let vocab: Vec<String> = vocab_spans.iter().map(|s| s.iter().map(|&i| WORDS[i]).collect::<Vec<_>>().join("_")).collect();
            let kg = vocab_kg(&vocab.iter().map(String::as_str).collect::<Vec<_>>());
            let seq = normalize(&text.join(" "));
            let got = ground_tokens(&kg, &seq, max_ngram);
            let got: BTreeMap<String, (usize, usize)> = got.spans.iter().map(|(c, s)| (kg.concept_name(*c).unwrap().to_owned(), *s)).collect();
            prop_assert_eq!(&got, &brute_force(&vocab, &seq, max_ngram));
            for (name, (s, e)) in &got {
                prop_assert_eq!(name, &seq.lemmas[*s..*e].join("_"));
            }
        }

        #[test]
        fn lemmas_are_fixpoints(text in "[A-Za-z ,.!?']{0,60}") {
            let once = normalize(&text);
            let twice = normalize(&once.lemmas.join(" "));
            prop_assert_eq!(&once.lemmas, &twice.lemmas);
            prop_assert!(once.tokens.iter().all(|t| !t.is_empty() && t.chars().all(|c| !c.is_uppercase())));
            prop_assert_eq!(normalize(&text.to_uppercase()).lemmas, once.lemmas);
        }
    }
}
