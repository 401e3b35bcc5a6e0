//! Language-independent text primitives: tokenization, a fallback sentence
//! splitter, TF-IDF cosine, LCS and ROUGE-L.

use std::collections::{BTreeMap, BTreeSet};

/// Lowercase word tokens: maximal runs of Unicode letters and digits.
pub type TokenList = Vec<String>;

pub fn tokenize(text: &str) -> TokenList {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// A sentence produced by [`split_sentences`]; offsets are in characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Naive splitter used when no annotations are available.
///
/// A sentence ends after `.`, `!` or `?` followed by whitespace (or the end of
/// the text), and at blank lines. Abbreviations such as "Dr." are split.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_non_ws = 0usize;

    let close = |start: &mut Option<usize>, end: usize, out: &mut Vec<SentenceSpan>| {
        if let Some(s) = start.take() {
            out.push(SentenceSpan {
                text: chars[s..end].iter().collect(),
                start: s,
                end,
            });
        }
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            if c == '\n' && start.is_some() && blank_line_follows(&chars, i) {
                close(&mut start, last_non_ws + 1, &mut out);
            }
            i += 1;
            continue;
        }
        if start.is_none() {
            start = Some(i);
        }
        last_non_ws = i;
        if matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_none_or(|n| n.is_whitespace()) {
            close(&mut start, i + 1, &mut out);
        }
        i += 1;
    }
    close(&mut start, last_non_ws + 1, &mut out);
    out
}

/// True when the line starting after `chars[newline]` holds only whitespace and
/// is itself terminated by a newline.
fn blank_line_follows(chars: &[char], newline: usize) -> bool {
    for &c in &chars[newline + 1..] {
        if c == '\n' {
            return true;
        }
        if !c.is_whitespace() {
            return false;
        }
    }
    false
}

/// Fitted inverse document frequencies over a comparison corpus.
///
/// Uses raw term counts and the smoothed weight `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone)]
pub struct TfidfModel {
    idf: BTreeMap<String, f64>,
    n_docs: usize,
}

/// Sparse TF-IDF vector with terms in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfidfVector {
    weights: BTreeMap<String, f64>,
    norm_sq: f64,
}

impl TfidfModel {
    pub fn fit<S: AsRef<[String]>>(corpus: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            let terms: BTreeSet<&String> = doc.as_ref().iter().collect();
            for t in terms {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let n = corpus.len() as f64;
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        TfidfModel {
            idf,
            n_docs: corpus.len(),
        }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    /// Vectorizes a document. Terms unseen during fitting are dropped.
    pub fn vector(&self, doc: &[String]) -> TfidfVector {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in doc {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let weights: BTreeMap<String, f64> = counts
            .into_iter()
            .filter_map(|(t, c)| self.idf.get(t).map(|idf| (t.to_owned(), c as f64 * idf)))
            .collect();
        let norm_sq = weights.values().map(|w| w * w).sum();
        TfidfVector { weights, norm_sq }
    }
}

impl TfidfVector {
    pub fn is_zero(&self) -> bool {
        self.norm_sq == 0.0
    }

    /// Cosine similarity, clamped to [0, 1]; 0.0 when either vector is zero.
    pub fn cosine(&self, other: &TfidfVector) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        // Both maps iterate in sorted term order, so the shared terms are summed
        // in the same order regardless of argument order.
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (&self.weights, &other.weights)
        } else {
            (&other.weights, &self.weights)
        };
        let dot: f64 = small
            .iter()
            .filter_map(|(t, w)| large.get(t).map(|v| w * v))
            .sum();
        (dot / (self.norm_sq * other.norm_sq).sqrt()).clamp(0.0, 1.0)
    }
}

/// TF-IDF cosine between two documents with idf fitted on `corpus`.
pub fn tfidf_cosine<S: AsRef<[String]>>(doc_a: &[String], doc_b: &[String], corpus: &[S]) -> f64 {
    if doc_a.is_empty() || doc_b.is_empty() {
        return 0.0;
    }
    let model = TfidfModel::fit(corpus);
    model.vector(doc_a).cosine(&model.vector(doc_b))
}

/// TF-IDF cosine with the corpus being exactly the two documents.
pub fn tfidf_pair_cosine(doc_a: &[String], doc_b: &[String]) -> f64 {
    tfidf_cosine(doc_a, doc_b, &[doc_a, doc_b])
}

pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure with β = 1, i.e. `2·LCS / (|a| + |b|)`.
pub fn rouge_l<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let lcs = lcs_length(a, b);
    if lcs == 0 {
        return 0.0;
    }
    2.0 * lcs as f64 / (a.len() + b.len()) as f64
}
