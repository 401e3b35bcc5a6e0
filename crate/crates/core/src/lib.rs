//! Response-consistency scoring for instruction-style variants.
//!
//! Responses to the same problem under different instruction styles are
//! compared along three dimensions (structurality, lexicality, coherence)
//! and aggregated into cross-response similarity (CRS). The crate also holds
//! prompt construction, answer grading, the style sensitivity index and the
//! correlation statistics used to relate CRS to accuracy.

pub mod align;
pub mod coherence;
pub mod corpus;
pub mod evaluation;
pub mod lexicality;
pub mod score;
pub mod stats;
pub mod structurality;
pub mod stylegen;
pub mod textproc;

pub use align::{AlignmentSet, SimilarityMode, SimilarityProvider};
pub use coherence::{coherence, CoherenceBreakdown, CoherenceConfig};
pub use corpus::{AnnotatedDocument, StyleId};
pub use lexicality::{lexicality, LexicalityConfig};
pub use score::{aggregate_crs, crs_for_problem, rcscore, CRSVector, RCScoreVector, ScoringConfigs};

/// Sum that does not depend on the order of its inputs.
///
/// Values are sorted before accumulation so that permuting the inputs (for
/// example swapping the two documents of a comparison) yields the same bits.
pub(crate) fn order_free_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

pub(crate) fn order_free_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    Some(order_free_sum(v) / n)
}
