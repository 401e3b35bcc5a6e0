//! One-to-one alignment of text units (sentences or chunks) by similarity.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("embedding similarity requested but a unit has no embedding")]
    MissingEmbedding,
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

/// A comparable unit: its tokens and, optionally, a dense embedding.
#[derive(Debug, Clone, Copy)]
pub struct TextUnit<'a> {
    pub tokens: &'a [String],
    pub embedding: Option<&'a [f64]>,
}

impl<'a> TextUnit<'a> {
    pub fn new(tokens: &'a [String], embedding: Option<&'a [f64]>) -> Self {
        TextUnit { tokens, embedding }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Embedding cosine when every unit on both sides has an embedding,
    /// token F1 otherwise.
    #[default]
    Auto,
    EmbeddingCosine,
    TokenF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityProvider {
    pub mode: SimilarityMode,
    pub threshold: f64,
}

impl Default for SimilarityProvider {
    fn default() -> Self {
        SimilarityProvider {
            mode: SimilarityMode::Auto,
            threshold: 0.5,
        }
    }
}

impl SimilarityProvider {
    pub fn token_f1(threshold: f64) -> Self {
        SimilarityProvider {
            mode: SimilarityMode::TokenF1,
            threshold,
        }
    }

    pub fn embedding_cosine(threshold: f64) -> Self {
        SimilarityProvider {
            mode: SimilarityMode::EmbeddingCosine,
            threshold,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(format!("alignment threshold {} outside [0, 1]", self.threshold));
        }
        Ok(())
    }

    /// Concrete mode used for comparing these two unit lists.
    pub fn resolve(&self, units_a: &[TextUnit], units_b: &[TextUnit]) -> SimilarityMode {
        match self.mode {
            SimilarityMode::Auto => {
                let all_embedded = units_a
                    .iter()
                    .chain(units_b)
                    .all(|u| u.embedding.is_some());
                if all_embedded && !(units_a.is_empty() && units_b.is_empty()) {
                    SimilarityMode::EmbeddingCosine
                } else {
                    SimilarityMode::TokenF1
                }
            }
            other => other,
        }
    }
}

/// Harmonic mean of multiset token-overlap precision and recall.
///
/// Two empty units are identical (1.0); one empty unit scores 0.0.
pub fn token_f1(a: &[String], b: &[String]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in a {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in b {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    2.0 * overlap as f64 / (a.len() + b.len()) as f64
}

/// Cosine of two vectors, clamped below at 0.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> Result<f64, AlignError> {
    if a.len() != b.len() {
        return Err(AlignError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb).sqrt()).clamp(0.0, 1.0))
}

pub fn unit_similarity(
    a: &TextUnit,
    b: &TextUnit,
    provider: &SimilarityProvider,
) -> Result<f64, AlignError> {
    let mode = provider.resolve(std::slice::from_ref(a), std::slice::from_ref(b));
    similarity_with(a, b, mode)
}

fn similarity_with(a: &TextUnit, b: &TextUnit, mode: SimilarityMode) -> Result<f64, AlignError> {
    match mode {
        SimilarityMode::TokenF1 => Ok(token_f1(a.tokens, b.tokens)),
        SimilarityMode::EmbeddingCosine | SimilarityMode::Auto => {
            let (ea, eb) = a
                .embedding
                .zip(b.embedding)
                .ok_or(AlignError::MissingEmbedding)?;
            clamped_cosine(ea, eb)
        }
    }
}

/// Dense row-major similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        SimilarityMatrix { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged similarity matrix");
        SimilarityMatrix {
            rows: rows.len(),
            cols,
            values: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn transposed(&self) -> Self {
        SimilarityMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub similarity: f64,
}

/// One-to-one set of aligned pairs, kept sorted by `index_a`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentSet {
    pairs: Vec<AlignedPair>,
}

impl AlignmentSet {
    pub fn new(mut pairs: Vec<AlignedPair>) -> Self {
        pairs.sort_by_key(|p| p.index_a);
        debug_assert!(is_one_to_one(&pairs));
        AlignmentSet { pairs }
    }

    /// Pairs `(i, i)` with similarity 1 for `0..n`.
    pub fn identity(n: usize) -> Self {
        AlignmentSet {
            pairs: (0..n)
                .map(|i| AlignedPair {
                    index_a: i,
                    index_b: i,
                    similarity: 1.0,
                })
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[AlignedPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn transposed(&self) -> Self {
        AlignmentSet::new(
            self.pairs
                .iter()
                .map(|p| AlignedPair {
                    index_a: p.index_b,
                    index_b: p.index_a,
                    similarity: p.similarity,
                })
                .collect(),
        )
    }
}

fn is_one_to_one(pairs: &[AlignedPair]) -> bool {
    let mut a: Vec<_> = pairs.iter().map(|p| p.index_a).collect();
    let mut b: Vec<_> = pairs.iter().map(|p| p.index_b).collect();
    a.sort_unstable();
    b.sort_unstable();
    a.windows(2).all(|w| w[0] != w[1]) && b.windows(2).all(|w| w[0] != w[1])
}

/// Global greedy matching: visit cells by similarity descending, ties by
/// `(i, j)` ascending, and accept a cell when both indices are free and its
/// similarity reaches `threshold`.
pub fn greedy_match(matrix: &SimilarityMatrix, threshold: f64) -> AlignmentSet {
    let mut cells: Vec<(usize, usize)> = (0..matrix.rows())
        .flat_map(|i| (0..matrix.cols()).map(move |j| (i, j)))
        .filter(|&(i, j)| matrix.get(i, j) >= threshold)
        .collect();
    cells.sort_by(|&(i1, j1), &(i2, j2)| {
        matrix
            .get(i2, j2)
            .total_cmp(&matrix.get(i1, j1))
            .then((i1, j1).cmp(&(i2, j2)))
    });

    let mut row_taken = vec![false; matrix.rows()];
    let mut col_taken = vec![false; matrix.cols()];
    let mut pairs = Vec::new();
    for (i, j) in cells {
        if row_taken[i] || col_taken[j] {
            continue;
        }
        row_taken[i] = true;
        col_taken[j] = true;
        pairs.push(AlignedPair {
            index_a: i,
            index_b: j,
            similarity: matrix.get(i, j),
        });
    }
    AlignmentSet::new(pairs)
}

pub fn similarity_matrix(
    units_a: &[TextUnit],
    units_b: &[TextUnit],
    provider: &SimilarityProvider,
) -> Result<SimilarityMatrix, AlignError> {
    let mode = provider.resolve(units_a, units_b);
    let mut values = Vec::with_capacity(units_a.len() * units_b.len());
    for a in units_a {
        for b in units_b {
            values.push(similarity_with(a, b, mode)?);
        }
    }
    Ok(SimilarityMatrix {
        rows: units_a.len(),
        cols: units_b.len(),
        values,
    })
}

pub fn align_units(
    units_a: &[TextUnit],
    units_b: &[TextUnit],
    provider: &SimilarityProvider,
) -> Result<AlignmentSet, AlignError> {
    let matrix = similarity_matrix(units_a, units_b, provider)?;
    Ok(greedy_match(&matrix, provider.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;
    use proptest::prelude::*;

    #[test]
    fn token_f1_examples() {
        let a = tokenize("the cat sat");
        assert_eq!(token_f1(&a, &a), 1.0);
        let v = token_f1(&a, &tokenize("the dog sat"));
        assert!((v - 2.0 / 3.0).abs() < 1e-4);
        // duplicates only match as often as they occur on both sides
        let v = token_f1(&tokenize("a a a"), &tokenize("a b"));
        assert!((v - 2.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_embeddings_score_zero() {
        let t: Vec<String> = vec![];
        let a = TextUnit::new(&t, Some(&[1.0, 0.0]));
        let b = TextUnit::new(&t, Some(&[0.0, 1.0]));
        let p = SimilarityProvider::embedding_cosine(0.5);
        assert_eq!(unit_similarity(&a, &b, &p).unwrap(), 0.0);
        let c = TextUnit::new(&t, Some(&[-1.0, 0.0]));
        assert_eq!(unit_similarity(&a, &c, &p).unwrap(), 0.0);
    }

    #[test]
    fn missing_embedding_is_an_error() {
        let t = tokenize("x");
        let a = TextUnit::new(&t, Some(&[1.0]));
        let b = TextUnit::new(&t, None);
        let p = SimilarityProvider::embedding_cosine(0.5);
        assert_eq!(unit_similarity(&a, &b, &p), Err(AlignError::MissingEmbedding));
        // auto falls back to token F1
        assert_eq!(unit_similarity(&a, &b, &SimilarityProvider::default()), Ok(1.0));
    }

    #[test]
    fn identical_lists_align_on_the_diagonal() {
        let sents: Vec<_> = ["one two", "three four", "five six"]
            .iter()
            .map(|s| tokenize(s))
            .collect();
        let units: Vec<_> = sents.iter().map(|t| TextUnit::new(t, None)).collect();
        let m = align_units(&units, &units, &SimilarityProvider::token_f1(0.5)).unwrap();
        assert_eq!(m, AlignmentSet::identity(3));
    }

    #[test]
    fn empty_side_gives_empty_alignment() {
        let t = tokenize("a");
        let units = [TextUnit::new(&t, None)];
        let p = SimilarityProvider::default();
        assert!(align_units(&units, &[], &p).unwrap().is_empty());
        assert!(align_units(&[], &units, &p).unwrap().is_empty());
    }

    #[test]
    fn greedy_two_by_two() {
        let m = SimilarityMatrix::from_rows(&[vec![0.9, 0.8], vec![0.85, 0.2]]);
        let set = greedy_match(&m, 0.5);
        assert_eq!(
            set.pairs(),
            &[AlignedPair {
                index_a: 0,
                index_b: 0,
                similarity: 0.9
            }]
        );
    }

    fn matrix_strategy() -> impl Strategy<Value = SimilarityMatrix> {
        (0usize..6, 0usize..6).prop_flat_map(|(r, c)| {
            proptest::collection::vec(
                prop_oneof![Just(0.25), Just(0.5), Just(0.75), Just(1.0), 0.0f64..1.0],
                r * c,
            )
            .prop_map(move |values| SimilarityMatrix {
                rows: r,
                cols: c,
                values,
            })
        })
    }

    proptest! {
        #[test]
        fn swap_symmetry(m in matrix_strategy(), t in 0.0f64..1.0) {
            let ab = greedy_match(&m, t);
            let ba = greedy_match(&m.transposed(), t);
            prop_assert_eq!(ab, ba.transposed());
        }

        #[test]
        fn one_to_one_and_above_threshold(m in matrix_strategy(), t in 0.0f64..1.0) {
            let set = greedy_match(&m, t);
            prop_assert!(is_one_to_one(set.pairs()));
            prop_assert!(set.pairs().iter().all(|p| p.similarity >= t));
        }

        #[test]
        fn raising_threshold_never_adds_pairs(m in matrix_strategy(), t in 0.0f64..1.0, dt in 0.0f64..0.5) {
            prop_assert!(greedy_match(&m, t + dt).len() <= greedy_match(&m, t).len());
        }
    }
}
