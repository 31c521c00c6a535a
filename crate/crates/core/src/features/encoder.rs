use crate::error::{Error, Result};
use crate::hashing::fnv1a;
use crate::text::word_tokens;

/// Default output width of the production sentence encoder.
pub const DEFAULT_EMBEDDING_DIM: usize = 384;

/// Sentence-embedding adapter.
pub trait SentenceEncoder: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Whether `embed` may be called from several threads at once. The
    /// featurizer serialises calls to encoders that return `false`.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>>;
}

/// Embeds one sentence, checking the encoder honoured its declared width.
pub fn embed_sentence(text: &str, encoder: &dyn SentenceEncoder) -> Result<Vec<f32>> {
    if text.trim().is_empty() {
        return Err(Error::InvalidInput("cannot embed empty text".into()));
    }
    let mut out = encoder.embed(&[text])?;
    match out.pop() {
        Some(v) if out.is_empty() && v.len() == encoder.dim() => Ok(v),
        Some(v) => Err(Error::adapter(
            encoder.name(),
            format!("returned vector of length {} (declared {})", v.len(), encoder.dim()),
        )),
        None => Err(Error::adapter(encoder.name(), "returned no vector")),
    }
}

/// Deterministic offline encoder: signed feature hashing of lower-cased
/// unigrams and bigrams, L2-normalised.
#[derive(Debug, Clone)]
pub struct HashingEncoder {
    name: String,
    dim: usize,
}

impl HashingEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "encoder dimension must be positive");
        Self {
            name: format!("hashing-{dim}"),
            dim,
        }
    }

    fn encode(&self, text: &str) -> Vec<f32> {
        let tokens = word_tokens(text);
        let mut v = vec![0f32; self.dim];
        let mut add = |key: &str, weight: f32| {
            let h = fnv1a(key.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * weight;
        };
        for t in &tokens {
            add(t, 1.0);
        }
        for w in tokens.windows(2) {
            add(&format!("{} {}", w[0], w[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl SentenceEncoder for HashingEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.encode(t)).collect())
    }
}

/// Token-presence encoder: component `i` is 1 when the sentence contains
/// vocabulary word `i`.
#[derive(Debug, Clone)]
pub struct KeywordEncoder {
    name: String,
    vocabulary: Vec<String>,
}

impl KeywordEncoder {
    pub fn new<S: AsRef<str>>(vocabulary: &[S]) -> Self {
        let vocabulary: Vec<String> = vocabulary.iter().map(|w| w.as_ref().to_lowercase()).collect();
        Self {
            name: format!("keywords-{}", vocabulary.len()),
            vocabulary,
        }
    }
}

impl SentenceEncoder for KeywordEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>> {
        Ok(texts
            .iter()
            .map(|t| {
                let tokens = word_tokens(t);
                self.vocabulary
                    .iter()
                    .map(|w| if tokens.iter().any(|t| t == w) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect())
    }
}
