//! Syntactic pattern similarity over aligned sentence pairs.
//!
//! Each non-punctuation token contributes the triple
//! `(token POS, dependency relation, head POS)`; the root contributes
//! `(POS, "root", POS)`. Sentences are compared by the Jaccard index of their
//! pattern sets and the document score is the mean over the alignment.

use std::collections::BTreeSet;

use crate::align::AlignmentSet;
use crate::corpus::{AnnotatedDocument, SentenceAnnotation};
use crate::order_free_sum;

/// Universal POS tag for punctuation; such tokens produce no pattern.
pub const PUNCT_TAG: &str = "PUNCT";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StructuralityError {
    #[error("sentence {index} has no token annotations")]
    MissingAnnotations { index: usize },
    #[error("alignment refers to sentence {index}, outside the document")]
    OutOfRange { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SyntacticPattern {
    pub pos_t: String,
    pub dep_r: String,
    pub pos_h: String,
}

pub type PatternSet = BTreeSet<SyntacticPattern>;

pub fn extract_patterns(sentence: &SentenceAnnotation) -> Result<PatternSet, SentenceWithoutTokens> {
    if sentence.tokens.is_empty() {
        return Err(SentenceWithoutTokens);
    }
    let tokens = &sentence.tokens;
    Ok(tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.pos != PUNCT_TAG)
        .map(|(idx, t)| {
            if t.head == idx {
                SyntacticPattern {
                    pos_t: t.pos.clone(),
                    dep_r: "root".to_owned(),
                    pos_h: t.pos.clone(),
                }
            } else {
                SyntacticPattern {
                    pos_t: t.pos.clone(),
                    dep_r: t.dep.clone(),
                    pos_h: tokens[t.head].pos.clone(),
                }
            }
        })
        .collect())
}

/// Marker error: the sentence carries no token annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceWithoutTokens;

/// Jaccard index with `J(∅, ∅) = 1`.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralityScore {
    pub value: f64,
    /// The alignment was empty, so the mean is undefined and `value` is 0.
    pub no_alignment: bool,
}

pub fn structurality(
    doc_a: &AnnotatedDocument,
    doc_b: &AnnotatedDocument,
    alignment: &AlignmentSet,
) -> Result<StructuralityScore, StructuralityError> {
    if alignment.is_empty() {
        return Ok(StructuralityScore {
            value: 0.0,
            no_alignment: true,
        });
    }
    let patterns = |doc: &AnnotatedDocument, index: usize| {
        let sentence = doc
            .sentences
            .get(index)
            .ok_or(StructuralityError::OutOfRange { index })?;
        extract_patterns(sentence).map_err(|_| StructuralityError::MissingAnnotations { index })
    };
    let mut scores = Vec::with_capacity(alignment.len());
    for pair in alignment.pairs() {
        let pa = patterns(doc_a, pair.index_a)?;
        let pb = patterns(doc_b, pair.index_b)?;
        scores.push(jaccard(&pa, &pb));
    }
    let value = order_free_sum(scores) / alignment.len() as f64;
    Ok(StructuralityScore {
        value,
        no_alignment: false,
    })
}
