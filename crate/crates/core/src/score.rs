//! Per-pair RCScore vectors and cross-response similarity (CRS).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::{align_units, AlignError, SimilarityProvider, TextUnit};
use crate::coherence::{coherence, CoherenceConfig};
use crate::corpus::{AnnotatedDocument, CrsRow, SentenceAnnotation, StyleId};
use crate::lexicality::{lexicality_tokens, LexicalityConfig};
use crate::structurality::{structurality, StructuralityError};
use crate::textproc::{split_sentences, tokenize, TokenList};
use crate::order_free_mean;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfigs {
    pub align: SimilarityProvider,
    pub lexicality: LexicalityConfig,
    pub coherence: CoherenceConfig,
}

impl ScoringConfigs {
    pub fn validate(&self) -> Result<(), String> {
        self.align.validate()?;
        self.lexicality.validate()?;
        self.coherence.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DegenerateFlags {
    pub no_alignment: bool,
    pub no_annotations: bool,
    pub empty_text: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.no_alignment || self.no_annotations || self.empty_text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RCScoreVector {
    pub structurality: f64,
    pub lexicality: f64,
    pub coherence: f64,
    pub overall: f64,
    pub flags: DegenerateFlags,
}

impl RCScoreVector {
    pub fn from_dims(structurality: f64, lexicality: f64, coherence: f64) -> Self {
        RCScoreVector {
            structurality,
            lexicality,
            coherence,
            overall: overall(structurality, lexicality, coherence),
            flags: DegenerateFlags::default(),
        }
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.structurality, self.lexicality, self.coherence]
    }
}

/// Equal-weight mean of the three dimensions.
pub fn overall(structurality: f64, lexicality: f64, coherence: f64) -> f64 {
    (structurality + lexicality + coherence) / 3.0
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("problem {problem_id}: {usable} usable responses, need at least 2")]
    TooFewResponses { problem_id: String, usable: usize },
    #[error("no per-problem CRS vectors to aggregate")]
    NothingToAggregate,
}

fn sentence_tokens(doc: &AnnotatedDocument) -> Vec<TokenList> {
    doc.sentences.iter().map(|s| tokenize(&s.text)).collect()
}

fn text_units<'a>(doc: &'a AnnotatedDocument, tokens: &'a [TokenList]) -> Vec<TextUnit<'a>> {
    doc.sentences
        .iter()
        .zip(tokens)
        .map(|(s, t)| TextUnit::new(t, s.embedding.as_deref()))
        .collect()
}

/// Compare two documents along all three dimensions.
///
/// Only a configuration that demands embeddings the documents lack is an
/// error; every other degenerate input scores zero with a flag set.
pub fn rcscore(
    doc_a: &AnnotatedDocument,
    doc_b: &AnnotatedDocument,
    configs: &ScoringConfigs,
) -> Result<RCScoreVector, ScoreError> {
    let tokens_a = sentence_tokens(doc_a);
    let tokens_b = sentence_tokens(doc_b);
    if tokens_a.iter().all(Vec::is_empty) || tokens_b.iter().all(Vec::is_empty) {
        let mut v = RCScoreVector::from_dims(0.0, 0.0, 0.0);
        v.flags.empty_text = true;
        return Ok(v);
    }

    let alignment = align_units(
        &text_units(doc_a, &tokens_a),
        &text_units(doc_b, &tokens_b),
        &configs.align,
    )?;

    let mut flags = DegenerateFlags::default();
    let structurality = match structurality(doc_a, doc_b, &alignment) {
        Ok(s) => {
            flags.no_alignment = s.no_alignment;
            s.value
        }
        Err(StructuralityError::MissingAnnotations { .. }) => {
            flags.no_annotations = true;
            0.0
        }
        Err(StructuralityError::OutOfRange { index }) => {
            unreachable!("alignment index {index} built from these documents")
        }
    };

    let flat_a: TokenList = tokens_a.into_iter().flatten().collect();
    let flat_b: TokenList = tokens_b.into_iter().flatten().collect();
    let lexicality = lexicality_tokens(&flat_a, &flat_b, &configs.lexicality).lexicality;
    let coherence = coherence(doc_a, doc_b, &configs.coherence).coherence;

    let mut v = RCScoreVector::from_dims(structurality, lexicality, coherence);
    v.flags = flags;
    Ok(v)
}

/// Build an unannotated document from raw response text with the fallback splitter.
pub fn document_from_text(problem_id: &str, style: StyleId, text: &str) -> AnnotatedDocument {
    AnnotatedDocument {
        problem_id: problem_id.to_owned(),
        style,
        sentences: split_sentences(text)
            .into_iter()
            .map(|s| SentenceAnnotation {
                text: s.text,
                start: s.start,
                end: s.end,
                embedding: None,
                tokens: Vec::new(),
            })
            .collect(),
    }
}

/// All style variants of the responses to one problem.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StyleResponseSet {
    pub problem_id: String,
    pub documents: BTreeMap<StyleId, AnnotatedDocument>,
}

impl StyleResponseSet {
    pub fn new(problem_id: impl Into<String>) -> Self {
        StyleResponseSet {
            problem_id: problem_id.into(),
            documents: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, doc: AnnotatedDocument) {
        self.documents.insert(doc.style, doc);
    }

    pub fn usable(&self) -> usize {
        self.documents.values().filter(|d| !d.is_empty()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CRSVector {
    pub structurality: f64,
    pub lexicality: f64,
    pub coherence: f64,
    pub overall: f64,
    pub n_pairs: usize,
    pub n_skipped: usize,
}

impl CRSVector {
    pub fn dims(&self) -> [f64; 3] {
        [self.structurality, self.lexicality, self.coherence]
    }

    fn from_means(vectors: &[[f64; 3]], n_pairs: usize, n_skipped: usize) -> Option<Self> {
        let dim = |k: usize| order_free_mean(vectors.iter().map(|v| v[k]));
        let (s, l, c) = (dim(0)?, dim(1)?, dim(2)?);
        Some(CRSVector {
            structurality: s,
            lexicality: l,
            coherence: c,
            overall: overall(s, l, c),
            n_pairs,
            n_skipped,
        })
    }

    pub fn to_row(&self, model: &str, benchmark: &str, n_problems: usize) -> CrsRow {
        CrsRow {
            model: model.to_owned(),
            benchmark: benchmark.to_owned(),
            crs_struct: self.structurality,
            crs_lex: self.lexicality,
            crs_coh: self.coherence,
            crs_overall: self.overall,
            n_problems,
        }
    }
}

/// Mean of the pairwise RCScore vectors over all unordered style pairs.
pub fn crs_for_problem(responses: &StyleResponseSet, configs: &ScoringConfigs) -> Result<CRSVector, ScoreError> {
    let usable = responses.usable();
    if usable < 2 {
        return Err(ScoreError::TooFewResponses {
            problem_id: responses.problem_id.clone(),
            usable,
        });
    }
    let docs: Vec<&AnnotatedDocument> = responses.documents.values().collect();
    let mut vectors = Vec::new();
    let mut skipped = 0;
    for (i, a) in docs.iter().enumerate() {
        for b in &docs[i + 1..] {
            if a.is_empty() && b.is_empty() {
                skipped += 1;
                continue;
            }
            vectors.push(rcscore(a, b, configs)?.dims());
        }
    }
    Ok(CRSVector::from_means(&vectors, vectors.len(), skipped).expect("at least one usable pair"))
}

/// Unweighted mean of per-problem CRS vectors, overall recomputed.
pub fn aggregate_crs(per_problem: &[CRSVector]) -> Result<CRSVector, ScoreError> {
    let dims: Vec<[f64; 3]> = per_problem.iter().map(CRSVector::dims).collect();
    let n_pairs = per_problem.iter().map(|v| v.n_pairs).sum();
    let n_skipped = per_problem.iter().map(|v| v.n_skipped).sum();
    CRSVector::from_means(&dims, n_pairs, n_skipped).ok_or(ScoreError::NothingToAggregate)
}
