use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use rcscore::corpus::{DecodingConfig, DecodingStrategy};
use rcscore::evaluation::AnswerMatch;
use rcscore::ScoringConfigs;
use rcscore_collector::EndpointConfig;

/// Settings shared by every subcommand; flags override these.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problems: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub annotations: Option<PathBuf>,
    pub accuracy: Option<PathBuf>,
    pub crs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub model: Option<String>,
    pub benchmark: Option<String>,
    pub endpoint: EndpointConfig,
    pub decoding: Option<DecodingConfig>,
    pub metrics: ScoringConfigs,
    pub answer_match: AnswerMatch,
    pub concurrency: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config
            .metrics
            .validate()
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        Ok(config)
    }
}

/// Decoding flags as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct DecodingOverrides {
    pub strategy: Option<DecodingStrategy>,
    pub temperature: Option<f64>,
    pub top_k: Option<u32>,
    pub top_p: Option<f64>,
    pub max_new_tokens: Option<u32>,
}

impl DecodingOverrides {
    pub fn resolve(&self, base: Option<&DecodingConfig>) -> Result<DecodingConfig, String> {
        let mut d = match (self.strategy, base) {
            (Some(s), Some(b)) if b.strategy == s => b.clone(),
            (Some(s), _) => DecodingConfig::for_strategy(s),
            (None, Some(b)) => b.clone(),
            (None, None) => DecodingConfig::greedy(),
        };
        if let Some(t) = self.temperature {
            d.temperature = t;
        }
        if let Some(k) = self.top_k {
            d.top_k = Some(k);
        }
        if let Some(p) = self.top_p {
            d.top_p = Some(p);
        }
        if let Some(m) = self.max_new_tokens {
            d.max_new_tokens = m;
        }
        d.validate()?;
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let o = DecodingOverrides {
            strategy: Some(DecodingStrategy::Beam),
            top_k: Some(20),
            ..Default::default()
        };
        let d = o.resolve(Some(&DecodingConfig::greedy())).unwrap();
        assert_eq!((d.strategy, d.temperature, d.top_k), (DecodingStrategy::Beam, 1.0, Some(20)));

        let bad = DecodingOverrides {
            temperature: Some(0.5),
            ..Default::default()
        };
        assert!(bad.resolve(None).is_err());
    }

    #[test]
    fn config_rejects_bad_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"metrics":{"lexicality":{"w_tf":0.9,"w_rl":0.9}}}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"model":"m","metrics":{"coherence":{"match_threshold":0.4}}}"#).unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.metrics.coherence.match_threshold, 0.4);
        assert_eq!(c.metrics.coherence.w_o, 0.25);
    }
}
