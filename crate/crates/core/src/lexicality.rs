//! Surface-level similarity: a weighted blend of TF-IDF cosine and ROUGE-L.

use serde::{Deserialize, Serialize};

use crate::textproc::{rouge_l, tfidf_pair_cosine, tokenize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexicalityConfig {
    pub w_tf: f64,
    pub w_rl: f64,
}

impl Default for LexicalityConfig {
    fn default() -> Self {
        LexicalityConfig { w_tf: 0.5, w_rl: 0.5 }
    }
}

impl LexicalityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.w_tf < 0.0 || self.w_rl < 0.0 {
            return Err("lexicality weights must be non-negative".into());
        }
        if ((self.w_tf + self.w_rl) - 1.0).abs() > 1e-9 {
            return Err(format!(
                "lexicality weights must sum to 1, got {} + {}",
                self.w_tf, self.w_rl
            ));
        }
        Ok(())
    }
}

/// Both components and their blend.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LexicalityBreakdown {
    pub tfidf: f64,
    pub rouge_l: f64,
    pub lexicality: f64,
}

pub fn lexicality_tokens(a: &[String], b: &[String], config: &LexicalityConfig) -> LexicalityBreakdown {
    let tfidf = tfidf_pair_cosine(a, b);
    let rl = rouge_l(a, b);
    LexicalityBreakdown {
        tfidf,
        rouge_l: rl,
        lexicality: blend(tfidf, rl, config),
    }
}

fn blend(tfidf: f64, rl: f64, config: &LexicalityConfig) -> f64 {
    (config.w_tf * tfidf + config.w_rl * rl).clamp(0.0, 1.0)
}

pub fn lexicality(doc_a_text: &str, doc_b_text: &str, config: &LexicalityConfig) -> f64 {
    lexicality_tokens(&tokenize(doc_a_text), &tokenize(doc_b_text), config).lexicality
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let cfg = LexicalityConfig::default();
        assert_eq!(lexicality("The cat sat.", "the cat sat", &cfg), 1.0);
        assert_eq!(lexicality("alpha beta", "gamma delta", &cfg), 0.0);
        assert_eq!(lexicality("", "gamma", &cfg), 0.0);
        let v = lexicality("a b", "a c", &cfg);
        assert!((v - 0.418).abs() < 1e-3, "{v}");
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(LexicalityConfig { w_tf: 0.7, w_rl: 0.4 }.validate().is_err());
        assert!(LexicalityConfig { w_tf: 0.3, w_rl: 0.7 }.validate().is_ok());
    }

    proptest! {
        #[test]
        fn convex_symmetric_monotone(
            a in proptest::collection::vec("[a-d]", 0..10),
            b in proptest::collection::vec("[a-d]", 0..10),
            w in 0.0f64..=1.0,
            bump in 0.0f64..0.5,
        ) {
            let cfg = LexicalityConfig { w_tf: w, w_rl: 1.0 - w };
            let ab = lexicality_tokens(&a, &b, &cfg);
            let ba = lexicality_tokens(&b, &a, &cfg);
            prop_assert_eq!(ab.lexicality.to_bits(), ba.lexicality.to_bits());
            let lo = ab.tfidf.min(ab.rouge_l);
            let hi = ab.tfidf.max(ab.rouge_l);
            prop_assert!(ab.lexicality >= lo - 1e-12 && ab.lexicality <= hi + 1e-12);
            let raised = blend(ab.tfidf, (ab.rouge_l + bump).min(1.0), &cfg);
            prop_assert!(raised >= ab.lexicality);
        }
    }
}
