//! Discourse-organization similarity between two documents.
//!
//! Documents are cut into contiguous sentence chunks, chunks are matched
//! one-to-one on a blended semantic/TF-IDF similarity, and the match is scored
//! on order (O), endpoint-weighted position (P), continuity (N) and content
//! coverage (C_s). The final score is `S · C_s²` where
//! `S = w_o·O + w_p·P + w_n·N + w_c·C_s`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::align::{clamped_cosine, greedy_match, token_f1, AlignmentSet, SimilarityMatrix};
use crate::corpus::AnnotatedDocument;
use crate::order_free_sum;
use crate::textproc::{tokenize, TfidfModel, TokenList};

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub sentence_span: Range<usize>,
    pub token_bag: TokenList,
    /// Mean of the member sentence embeddings, when all of them have one.
    pub embedding: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub w_o: f64,
    pub w_p: f64,
    pub w_n: f64,
    pub w_c: f64,
    /// Upper bound on sentences per chunk; `k = clamp(round(√n), 1, max_chunk_size)`.
    pub max_chunk_size: usize,
    pub match_threshold: f64,
    pub endpoint_weight: f64,
    /// Share of the semantic term in the chunk similarity; the rest is TF-IDF cosine.
    pub semantic_weight: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        CoherenceConfig {
            w_o: 0.25,
            w_p: 0.25,
            w_n: 0.25,
            w_c: 0.25,
            max_chunk_size: 5,
            match_threshold: 0.3,
            endpoint_weight: 2.0,
            semantic_weight: 0.5,
        }
    }
}

impl CoherenceConfig {
    pub fn validate(&self) -> Result<(), String> {
        let w = [self.w_o, self.w_p, self.w_n, self.w_c];
        if w.iter().any(|x| *x < 0.0) {
            return Err("coherence weights must be non-negative".into());
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(format!("coherence weights must sum to 1, got {w:?}"));
        }
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(format!("match_threshold {} outside [0, 1]", self.match_threshold));
        }
        if self.endpoint_weight < 1.0 {
            return Err(format!("endpoint_weight must be >= 1, got {}", self.endpoint_weight));
        }
        if !(0.0..=1.0).contains(&self.semantic_weight) {
            return Err(format!("semantic_weight {} outside [0, 1]", self.semantic_weight));
        }
        if self.max_chunk_size == 0 {
            return Err("max_chunk_size must be positive".into());
        }
        Ok(())
    }

    pub fn chunk_size(&self, n_sentences: usize) -> usize {
        ((n_sentences as f64).sqrt().round() as usize).clamp(1, self.max_chunk_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CoherenceBreakdown {
    pub order_o: f64,
    pub position_p: f64,
    pub continuity_n: f64,
    pub content_cs: f64,
    pub structural_s: f64,
    pub penalty_cw: f64,
    pub coherence: f64,
}

impl CoherenceBreakdown {
    fn from_components(o: f64, p: f64, n: f64, cs: f64, config: &CoherenceConfig) -> Self {
        let s = (config.w_o * o + config.w_p * p + config.w_n * n + config.w_c * cs).clamp(0.0, 1.0);
        let cw = cs * cs;
        CoherenceBreakdown {
            order_o: o,
            position_p: p,
            continuity_n: n,
            content_cs: cs,
            structural_s: s,
            penalty_cw: cw,
            coherence: s * cw,
        }
    }
}

pub fn segment_chunks(doc: &AnnotatedDocument, config: &CoherenceConfig) -> Vec<Chunk> {
    let n = doc.sentences.len();
    if n == 0 {
        return Vec::new();
    }
    let k = config.chunk_size(n);
    (0..n)
        .step_by(k)
        .map(|start| {
            let span = start..(start + k).min(n);
            let members = &doc.sentences[span.clone()];
            let token_bag = members.iter().flat_map(|s| tokenize(&s.text)).collect();
            let embedding = mean_embedding(members.iter().map(|s| s.embedding.as_deref()));
            Chunk {
                sentence_span: span,
                token_bag,
                embedding,
            }
        })
        .collect()
}

fn mean_embedding<'a>(embeddings: impl Iterator<Item = Option<&'a [f64]>>) -> Option<Vec<f64>> {
    let mut sum: Option<Vec<f64>> = None;
    let mut count = 0usize;
    for e in embeddings {
        let e = e?;
        match &mut sum {
            None => sum = Some(e.to_vec()),
            Some(acc) => {
                if acc.len() != e.len() {
                    return None;
                }
                acc.iter_mut().zip(e).for_each(|(a, x)| *a += x);
            }
        }
        count += 1;
    }
    sum.map(|mut v| {
        v.iter_mut().for_each(|x| *x /= count as f64);
        v
    })
}

fn normalized_position(index: usize, m: usize) -> f64 {
    if m <= 1 {
        0.5
    } else {
        index as f64 / (m - 1) as f64
    }
}

fn is_endpoint(index: usize, m: usize) -> bool {
    index == 0 || index + 1 == m
}

/// Kendall's tau-a between source and target indices of the matches.
fn kendall_tau_a(alignment: &AlignmentSet) -> f64 {
    let pairs = alignment.pairs();
    let n = pairs.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for (x, p) in pairs.iter().enumerate() {
        for q in &pairs[x + 1..] {
            let ds = (p.index_a as i64 - q.index_a as i64).signum();
            let dt = (p.index_b as i64 - q.index_b as i64).signum();
            match ds * dt {
                1 => concordant += 1,
                -1 => discordant += 1,
                _ => {}
            }
        }
    }
    let total = (n * (n - 1) / 2) as f64;
    (concordant - discordant) as f64 / total
}

/// Order, position, continuity and content scores for a chunk matching
/// between documents with `m_a` and `m_b` chunks.
pub fn coherence_components(
    matches: &AlignmentSet,
    m_a: usize,
    m_b: usize,
    config: &CoherenceConfig,
) -> CoherenceBreakdown {
    let pairs = matches.pairs();
    if pairs.is_empty() {
        return CoherenceBreakdown::from_components(1.0, 0.0, 1.0, 0.0, config);
    }

    let order = if pairs.len() < 2 {
        1.0
    } else {
        (kendall_tau_a(matches) + 1.0) / 2.0
    };

    let mut weighted = Vec::with_capacity(pairs.len());
    let mut weights = Vec::with_capacity(pairs.len());
    for p in pairs {
        let w = if is_endpoint(p.index_a, m_a) || is_endpoint(p.index_b, m_b) {
            config.endpoint_weight
        } else {
            1.0
        };
        let gap = (normalized_position(p.index_a, m_a) - normalized_position(p.index_b, m_b)).abs();
        weighted.push(w * (1.0 - gap));
        weights.push(w);
    }
    let position = order_free_sum(weighted) / order_free_sum(weights);

    let continuity = if pairs.len() < 2 {
        1.0
    } else {
        continuity(matches)
    };

    let mean_sim = order_free_sum(pairs.iter().map(|p| p.similarity)) / pairs.len() as f64;
    let coverage = 2.0 * pairs.len() as f64 / (m_a + m_b) as f64;
    let content = (mean_sim * coverage).clamp(0.0, 1.0);

    CoherenceBreakdown::from_components(order, position.clamp(0.0, 1.0), continuity, content, config)
}

/// Share of adjacent match pairs that stay adjacent and in order on both sides.
///
/// A pair of matches counts as adjacent if its chunks are neighbours in
/// either document; it is continuous if they are neighbours in both and
/// advance in the same direction. Taking the union of both sides keeps the
/// ratio independent of which document is the source.
fn continuity(matches: &AlignmentSet) -> f64 {
    let pairs = matches.pairs();
    let mut adjacent = 0usize;
    let mut continuous = 0usize;
    for (x, p) in pairs.iter().enumerate() {
        for q in &pairs[x + 1..] {
            let ds = q.index_a as i64 - p.index_a as i64;
            let dt = q.index_b as i64 - p.index_b as i64;
            if ds.abs() == 1 || dt.abs() == 1 {
                adjacent += 1;
                if ds.abs() == 1 && dt == ds {
                    continuous += 1;
                }
            }
        }
    }
    if adjacent == 0 {
        return 0.0;
    }
    continuous as f64 / adjacent as f64
}

/// Blended chunk-to-chunk similarity matrix.
pub fn chunk_similarity_matrix(
    chunks_a: &[Chunk],
    chunks_b: &[Chunk],
    config: &CoherenceConfig,
) -> SimilarityMatrix {
    let corpus: Vec<&[String]> = chunks_a
        .iter()
        .chain(chunks_b)
        .map(|c| c.token_bag.as_slice())
        .collect();
    let model = TfidfModel::fit(&corpus);
    let vec_a: Vec<_> = chunks_a.iter().map(|c| model.vector(&c.token_bag)).collect();
    let vec_b: Vec<_> = chunks_b.iter().map(|c| model.vector(&c.token_bag)).collect();
    let embedded = chunks_a.iter().chain(chunks_b).all(|c| c.embedding.is_some())
        && dims_agree(chunks_a.iter().chain(chunks_b));
    let w = config.semantic_weight;

    SimilarityMatrix::from_fn(chunks_a.len(), chunks_b.len(), |i, j| {
        let semantic = match (embedded, &chunks_a[i].embedding, &chunks_b[j].embedding) {
            (true, Some(ea), Some(eb)) => clamped_cosine(ea, eb).unwrap_or(0.0),
            _ => token_f1(&chunks_a[i].token_bag, &chunks_b[j].token_bag),
        };
        let lexical = vec_a[i].cosine(&vec_b[j]);
        (w * semantic + (1.0 - w) * lexical).clamp(0.0, 1.0)
    })
}

fn dims_agree<'a>(mut chunks: impl Iterator<Item = &'a Chunk>) -> bool {
    let first = chunks.next().and_then(|c| c.embedding.as_ref().map(Vec::len));
    chunks.all(|c| c.embedding.as_ref().map(Vec::len) == first)
}

pub fn coherence(
    doc_a: &AnnotatedDocument,
    doc_b: &AnnotatedDocument,
    config: &CoherenceConfig,
) -> CoherenceBreakdown {
    let chunks_a = segment_chunks(doc_a, config);
    let chunks_b = segment_chunks(doc_b, config);
    if chunks_a.is_empty() || chunks_b.is_empty() {
        return CoherenceBreakdown::from_components(1.0, 0.0, 1.0, 0.0, config);
    }
    let matrix = chunk_similarity_matrix(&chunks_a, &chunks_b, config);
    let matches = greedy_match(&matrix, config.match_threshold);
    coherence_components(&matches, chunks_a.len(), chunks_b.len(), config)
}
