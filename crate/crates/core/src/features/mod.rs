//! Sentence features: a dense embedding concatenated with binary lexicon
//! category bits, plus back-translation augmentation.

mod augment;
mod encoder;
mod lexicon;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use augment::{
    back_translate, balance_dataset, BalanceOutcome, IdentityTranslator, LexicalParaphraser, RoundTripTranslator,
};
pub use encoder::{embed_sentence, HashingEncoder, KeywordEncoder, SentenceEncoder, DEFAULT_EMBEDDING_DIM};
pub use lexicon::{Lexicon, DEFAULT_CATEGORY_COUNT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub embedding: Vec<f32>,
    pub lexicon_bits: Vec<u8>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.embedding.len() + self.lexicon_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `embedding ++ lexicon_bits`, in that order.
    pub fn combined(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.embedding);
        v.extend(self.lexicon_bits.iter().map(|&b| f32::from(b)));
        v
    }
}

/// Identity of the feature space a model was trained in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub encoder: String,
    pub encoder_dim: usize,
    pub lexicon_hash: String,
    pub lexicon_categories: usize,
}

impl FeatureConfig {
    pub fn width(&self) -> usize {
        self.encoder_dim + self.lexicon_categories
    }
}

impl std::fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{} + lexicon {}/{}",
            self.encoder,
            self.encoder_dim,
            &self.lexicon_hash[..self.lexicon_hash.len().min(12)],
            self.lexicon_categories
        )
    }
}

pub struct Featurizer {
    encoder: Arc<dyn SentenceEncoder>,
    lexicon: Arc<Lexicon>,
    gate: Option<Mutex<()>>,
    allow_zero_fallback: bool,
}

impl Featurizer {
    pub fn new(encoder: Arc<dyn SentenceEncoder>, lexicon: Arc<Lexicon>) -> Self {
        let gate = (!encoder.concurrent_safe()).then(|| Mutex::new(()));
        Self {
            encoder,
            lexicon,
            gate,
            allow_zero_fallback: false,
        }
    }

    /// Substitute a zero embedding when the encoder fails instead of
    /// returning the error.
    pub fn with_zero_fallback(mut self, allow: bool) -> Self {
        self.allow_zero_fallback = allow;
        self
    }

    pub fn config(&self) -> FeatureConfig {
        FeatureConfig {
            encoder: self.encoder.name().to_string(),
            encoder_dim: self.encoder.dim(),
            lexicon_hash: self.lexicon.hash().to_string(),
            lexicon_categories: self.lexicon.len(),
        }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn encoder(&self) -> &dyn SentenceEncoder {
        self.encoder.as_ref()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        let _guard = self.gate.as_ref().map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
        let out = self.encoder.embed(texts)?;
        let dim = self.encoder.dim();
        if out.len() != texts.len() || out.iter().any(|v| v.len() != dim) {
            return Err(Error::adapter(
                self.encoder.name(),
                format!("expected {} vectors of length {dim}", texts.len()),
            ));
        }
        Ok(out)
    }

    pub fn featurize(&self, text: &str) -> Result<FeatureVector> {
        Ok(self.featurize_batch(&[text])?.remove(0))
    }

    pub fn featurize_batch(&self, texts: &[&str]) -> Result<Vec<FeatureVector>> {
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(Error::InvalidInput(format!("cannot featurize empty text at position {i}")));
        }
        let embeddings = match self.embed(texts) {
            Ok(e) => e,
            Err(e) if self.allow_zero_fallback => {
                tracing::warn!(error = %e, "encoder failed; using zero embeddings");
                vec![vec![0.0; self.encoder.dim()]; texts.len()]
            }
            Err(e) => return Err(e),
        };
        Ok(embeddings
            .into_iter()
            .zip(texts)
            .map(|(embedding, t)| FeatureVector {
                embedding,
                lexicon_bits: self.lexicon.features(t),
            })
            .collect())
    }
}
