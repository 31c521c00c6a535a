use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::fnv1a;
use crate::text::word_tokens;

/// Contextual token-embedding adapter: one vector per token of `text`.
pub trait TokenEmbedder: Send + Sync {
    fn name(&self) -> &str;
    fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub rescaled: bool,
    pub embedder: String,
}

/// Harmonic mean when both inputs are positive, otherwise 0.
pub fn f1_of(p: f64, r: f64) -> f64 {
    if p > 0.0 && r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Greedy matching over token embeddings: precision averages, over
/// candidate tokens, the best cosine to any reference token; recall does
/// the same from the reference side.
pub fn greedy_match(candidate: &[Vec<f32>], reference: &[Vec<f32>]) -> (f64, f64) {
    let sims: Vec<Vec<f64>> = candidate
        .iter()
        .map(|c| reference.iter().map(|r| cosine(c, r)).collect())
        .collect();
    let p = sims
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / candidate.len() as f64;
    let r = (0..reference.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    (p, r)
}

pub fn token_similarity(candidate: &str, reference: &str, embedder: &dyn TokenEmbedder) -> Result<SimilarityScore> {
    let c = embedder.embed_tokens(candidate)?;
    let r = embedder.embed_tokens(reference)?;
    if c.is_empty() || r.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cannot score: {} candidate and {} reference tokens",
            c.len(),
            r.len()
        )));
    }
    let (precision, recall) = greedy_match(&c, &r);
    Ok(SimilarityScore {
        precision,
        recall,
        f1: f1_of(precision, recall),
        rescaled: false,
        embedder: embedder.name().to_string(),
    })
}

/// Linear baseline rescaling `(x - b) / (1 - b)` of precision and recall,
/// with F1 recomputed from the rescaled values.
pub fn rescale(score: &SimilarityScore, baseline: f64) -> Result<SimilarityScore> {
    if !(baseline < 1.0) {
        return Err(Error::InvalidInput(format!("rescaling baseline {baseline} must be below 1")));
    }
    let f = |x: f64| (x - baseline) / (1.0 - baseline);
    let (p, r) = (f(score.precision), f(score.recall));
    Ok(SimilarityScore {
        precision: p,
        recall: r,
        f1: f1_of(p, r),
        rescaled: true,
        embedder: score.embedder.clone(),
    })
}

fn hashed_unit(token: &str, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / n).collect()
}

/// Context-free embedder: each lower-cased word token maps to a fixed
/// pseudo-random unit vector, or to an explicit vector when one is given.
#[derive(Debug, Clone)]
pub struct StaticTokenEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
    name: String,
}

impl StaticTokenEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            table: HashMap::new(),
            name: format!("static-hash-{dim}"),
        }
    }

    pub fn with_table(table: HashMap<String, Vec<f32>>) -> Result<Self> {
        let dim = table.values().next().map(Vec::len).unwrap_or(0);
        if dim == 0 || table.values().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("token table vectors must share a positive width".into()));
        }
        Ok(Self {
            dim,
            table,
            name: format!("static-table-{dim}"),
        })
    }

    fn vector(&self, token: &str) -> Vec<f32> {
        self.table.get(token).cloned().unwrap_or_else(|| hashed_unit(token, self.dim))
    }
}

impl TokenEmbedder for StaticTokenEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f32>>> {
        Ok(word_tokens(text).iter().map(|t| self.vector(t)).collect())
    }
}

/// Offline contextual embedder: a token's vector is its own hashed vector
/// plus half of each neighbour's, so the same word differs by context.
#[derive(Debug, Clone)]
pub struct HashedContextEmbedder {
    dim: usize,
    name: String,
}

impl HashedContextEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            name: format!("hashed-context-{dim}"),
        }
    }
}

impl TokenEmbedder for HashedContextEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<Vec<f32>>> {
        let base: Vec<Vec<f32>> = word_tokens(text).iter().map(|t| hashed_unit(t, self.dim)).collect();
        Ok((0..base.len())
            .map(|i| {
                let mut v = base[i].clone();
                for j in [i.wrapping_sub(1), i + 1] {
                    if let Some(n) = base.get(j) {
                        v.iter_mut().zip(n).for_each(|(a, b)| *a += 0.5 * b);
                    }
                }
                v
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_scores_one() {
        let e = HashedContextEmbedder::new(32);
        let s = token_similarity("you are doing great", "you are doing great", &e).unwrap();
        for x in [s.precision, s.recall, s.f1] {
            assert!((x - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn swap_symmetry() {
        let e = StaticTokenEmbedder::new(16);
        let a = token_similarity("so tired today", "the baby cried", &e).unwrap();
        let b = token_similarity("the baby cried", "so tired today", &e).unwrap();
        assert_eq!(a.precision, b.recall);
        assert_eq!(a.recall, b.precision);
        assert_eq!(a.f1, b.f1);
    }

    #[test]
    fn hand_case() {
        // cos(t1,t1)=1, cos(t2,t3)=0.5, cos(t2,t1)=0.2, cos(t1,t3)=0.1.
        let s3 = 0.99f32.sqrt();
        let y = 0.48 / s3;
        let t1 = vec![1.0f32, 0.0, 0.0];
        let t1_copy = t1.clone();
        let t2 = vec![0.2f32, y, (1.0 - 0.04 - y * y).sqrt()];
        let t3 = vec![0.1f32, s3, 0.0];
        let table: HashMap<String, Vec<f32>> =
            [("t1".to_string(), t1), ("t2".to_string(), t2.clone()), ("t3".to_string(), t3.clone())].into();
        assert!((cosine(&t2, &t3) - 0.5).abs() < 1e-6);
        assert!((cosine(&t2, &t1_copy) - 0.2).abs() < 1e-6);
        let e = StaticTokenEmbedder::with_table(table).unwrap();
        let s = token_similarity("t1 t2", "t1 t3", &e).unwrap();
        assert!((s.precision - 0.75).abs() < 1e-6);
        assert!((s.recall - 0.75).abs() < 1e-6);
        assert!((s.f1 - 0.75).abs() < 1e-6);
    }

    #[test]
    fn empty_input_is_error() {
        assert!(token_similarity("...", "hello", &StaticTokenEmbedder::new(4)).is_err());
    }

    #[test]
    fn rescaling() {
        let s = SimilarityScore {
            precision: 0.9,
            recall: 0.8,
            f1: f1_of(0.9, 0.8),
            rescaled: false,
            embedder: "x".into(),
        };
        let r = rescale(&s, 0.8).unwrap();
        assert!((r.precision - 0.5).abs() < 1e-12);
        assert!(r.recall.abs() < 1e-12);
        assert_eq!(r.f1, 0.0);
        assert!(r.rescaled);
    }
}
