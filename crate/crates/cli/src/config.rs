//! TOML run configuration. Every key is optional; command-line flags take
//! precedence over the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use warmline_core::classifiers::{ClassifierBundle, KeywordDetectors};
use warmline_core::features::{HashingEncoder, SentenceEncoder, DEFAULT_EMBEDDING_DIM};
use warmline_core::{synth, Detectors, Featurizer, Lexicon, ResponsePools};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub features: FeaturesConfig,
    pub train: TrainSection,
    pub dialogue: DialogueConfig,
    pub generative: GenerativeConfig,
    pub eval: EvalConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub min_turns: usize,
    pub min_words: usize,
    /// JSON file `{"persons": [...], "places": [...], "orgs": [...]}`.
    pub gazetteer: Option<PathBuf>,
    pub gold_responders: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            min_turns: 3,
            min_words: 50,
            gazetteer: None,
            gold_responders: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    /// `hashing` or `synthetic-keywords`.
    pub encoder: String,
    pub dim: usize,
    /// Lexicon JSON; the bundled demonstration lexicon when absent.
    pub lexicon: Option<PathBuf>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            encoder: "hashing".into(),
            dim: DEFAULT_EMBEDDING_DIM,
            lexicon: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub folds: usize,
    pub balance: bool,
    pub balance_ratio: f64,
    pub trees: usize,
    pub precision_floor: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            folds: 3,
            balance: false,
            balance_ratio: 1.0,
            trees: 200,
            precision_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialogueConfig {
    pub pools: Option<PathBuf>,
    /// Classifier bundle directory; keyword detectors when absent.
    pub bundle: Option<PathBuf>,
    pub disclaimer: Option<String>,
    pub max_label_replies: usize,
    pub default_engine: String,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self {
            pools: None,
            bundle: None,
            disclaimer: None,
            max_label_replies: warmline_core::dialogue::MAX_LABEL_REPLIES,
            default_engine: "rule_based".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerativeConfig {
    pub checkpoint: Option<PathBuf>,
    pub epochs: usize,
    pub learning_rate: f32,
    pub context_turns: usize,
    pub max_new_tokens: usize,
    pub temperature: f32,
    pub top_p: f64,
    pub dedupe: bool,
    pub capacity: usize,
}

impl Default for GenerativeConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            epochs: 3,
            learning_rate: 0.05,
            context_turns: warmline_core::generative::DEFAULT_CONTEXT_TURNS,
            max_new_tokens: 40,
            temperature: 0.0,
            top_p: 0.9,
            dedupe: false,
            capacity: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub embedder_dim: usize,
    /// Linear rescaling baseline; raw similarity when absent.
    pub rescale_baseline: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            embedder_dim: 64,
            rescale_baseline: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub data_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("sessions"),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn encoder(&self) -> Result<Arc<dyn SentenceEncoder>> {
        Ok(match self.features.encoder.as_str() {
            "hashing" => Arc::new(HashingEncoder::new(self.features.dim)),
            "synthetic-keywords" => Arc::new(synth::keyword_encoder()),
            other => bail!("unknown encoder `{other}` (expected hashing or synthetic-keywords)"),
        })
    }

    pub fn featurizer(&self) -> Result<Arc<Featurizer>> {
        let lexicon = match &self.features.lexicon {
            Some(p) => Lexicon::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
            None => Lexicon::demo(),
        };
        Ok(Arc::new(Featurizer::new(self.encoder()?, Arc::new(lexicon))))
    }

    pub fn pools(&self) -> Result<ResponsePools> {
        let mut pools = match &self.dialogue.pools {
            Some(p) => ResponsePools::load(p).with_context(|| format!("loading pools {}", p.display()))?,
            None => ResponsePools::builtin(),
        };
        if let Some(d) = &self.dialogue.disclaimer {
            pools.templates.disclaimer = d.clone();
            pools.validate()?;
        }
        Ok(pools)
    }

    pub fn bundle(&self) -> Result<Option<ClassifierBundle>> {
        match &self.dialogue.bundle {
            Some(dir) => Ok(Some(
                ClassifierBundle::load(dir, self.featurizer()?)
                    .with_context(|| format!("loading classifier bundle {}", dir.display()))?,
            )),
            None => Ok(None),
        }
    }

    /// The configured classifier bundle, or the keyword detectors.
    pub fn detectors(&self) -> Result<Arc<dyn Detectors>> {
        Ok(match self.bundle()? {
            Some(b) => Arc::new(b),
            None => {
                tracing::info!("no classifier bundle configured; using keyword detectors");
                Arc::new(KeywordDetectors::builtin())
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let c: Config = toml::from_str("seed = 4\n[train]\nfolds = 5\n").unwrap();
        assert_eq!(c.seed, Some(4));
        assert_eq!(c.train.folds, 5);
        assert_eq!(c.train.trees, 200);
        assert_eq!(c.data.min_words, 50);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[train]\nfold = 5\n").is_err());
    }
}
