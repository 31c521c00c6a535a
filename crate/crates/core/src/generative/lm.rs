//! A small word-level neural language model trained with plain SGD.
//!
//! Each position sees the embeddings of the three previous tokens plus the
//! mean embedding of every earlier token in the sequence, passed through
//! one tanh hidden layer into a softmax over the vocabulary.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Decoding, END_TAG, RESPONDER_TAG, SEEKER_TAG};
use crate::error::{Error, Result};
use crate::text::{detokenize, lm_tokens};

const WINDOW: usize = 3;
const PAD: &str = "<pad>";
const UNK: &str = "<unk>";

/// Causal language-model adapter used by the fine-tuning pipeline.
pub trait CausalLm: Send + Sync {
    fn name(&self) -> String;

    /// Summed negative log-likelihood and count of scored positions.
    /// Only tokens after the final responder tag are scored.
    fn sequence_loss(&self, text: &str) -> Result<(f64, usize)>;

    /// One SGD pass over `text`; returns the pre-update loss like
    /// [`CausalLm::sequence_loss`].
    fn train_sequence(&mut self, text: &str, learning_rate: f32) -> Result<(f64, usize)>;

    /// Continues `prompt` and returns only the new text.
    fn generate(&self, prompt: &str, decoding: &Decoding) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyLmConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_seq_len: usize,
}

impl Default for TinyLmConfig {
    fn default() -> Self {
        Self {
            embed_dim: 24,
            hidden_dim: 64,
            max_seq_len: 96,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyLm {
    config: TinyLmConfig,
    vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
    emb: Vec<f32>,
    w1: Vec<f32>,
    b1: Vec<f32>,
    w2: Vec<f32>,
    b2: Vec<f32>,
}

struct Forward {
    x: Vec<f32>,
    h: Vec<f32>,
    p: Vec<f32>,
}

impl TinyLm {
    /// Builds the vocabulary from `texts` and initialises weights from `seed`.
    pub fn new<S: AsRef<str>>(texts: &[S], config: TinyLmConfig, seed: u64) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 || config.max_seq_len < 2 {
            return Err(Error::InvalidInput("tiny LM dimensions must be positive".into()));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in lm_tokens(t.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let specials = [PAD, UNK, SEEKER_TAG, RESPONDER_TAG, END_TAG];
        let mut words: Vec<(String, usize)> =
            counts.into_iter().filter(|(w, _)| !specials.contains(&w.as_str())).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let vocab: Vec<String> = specials
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(|w| w.0))
            .collect();

        let (v, e, h) = (vocab.len(), config.embed_dim, config.hidden_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |n: usize, scale: f32| -> Vec<f32> { (0..n).map(|_| rng.random_range(-scale..scale)).collect() };
        let emb = init(v * e, 0.5);
        let w1 = init((WINDOW + 1) * e * h, (6.0 / ((WINDOW + 1) * e + h) as f32).sqrt());
        let w2 = init(h * v, (6.0 / (h + v) as f32).sqrt());
        let mut lm = Self {
            config,
            vocab,
            index: HashMap::new(),
            emb,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; v],
        };
        lm.rebuild_index();
        Ok(lm)
    }

    fn rebuild_index(&mut self) {
        self.index = self.vocab.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
    }

    /// Restores the token index after deserialisation.
    pub fn from_json(s: &str) -> Result<Self> {
        let mut lm: TinyLm = serde_json::from_str(s)?;
        let (v, e, h) = (lm.vocab.len(), lm.config.embed_dim, lm.config.hidden_dim);
        if lm.emb.len() != v * e || lm.w1.len() != (WINDOW + 1) * e * h || lm.w2.len() != h * v {
            return Err(Error::InvalidInput("tiny LM weights do not match its dimensions".into()));
        }
        lm.rebuild_index();
        Ok(lm)
    }

    pub fn config(&self) -> &TinyLmConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn id(&self, tok: &str) -> u32 {
        self.index.get(tok).copied().unwrap_or(1)
    }

    fn encode(&self, text: &str) -> Vec<u32> {
        let ids: Vec<u32> = lm_tokens(text).iter().map(|t| self.id(t)).collect();
        let keep = self.config.max_seq_len;
        if ids.len() > keep {
            ids[ids.len() - keep..].to_vec()
        } else {
            ids
        }
    }

    fn target_start(&self, ids: &[u32]) -> Option<usize> {
        let responder = self.id(RESPONDER_TAG);
        ids.iter().rposition(|&t| t == responder).map(|i| i + 1)
    }

    fn input(&self, ids: &[u32], t: usize, bag: &[f32]) -> Vec<f32> {
        let e = self.config.embed_dim;
        let mut x = Vec::with_capacity((WINDOW + 1) * e);
        for k in (1..=WINDOW).rev() {
            let tok = if t >= k { ids[t - k] as usize } else { 0 };
            x.extend_from_slice(&self.emb[tok * e..(tok + 1) * e]);
        }
        let n = t.max(1) as f32;
        x.extend(bag.iter().map(|b| b / n));
        x
    }

    fn forward(&self, x: Vec<f32>) -> Forward {
        let (h_dim, v) = (self.config.hidden_dim, self.vocab.len());
        let mut h = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.w1[i * h_dim..(i + 1) * h_dim];
                h.iter_mut().zip(row).for_each(|(a, w)| *a += xi * w);
            }
        }
        h.iter_mut().for_each(|a| *a = a.tanh());
        let mut logits = self.b2.clone();
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.w2[j * v..(j + 1) * v];
            logits.iter_mut().zip(row).for_each(|(l, w)| *l += hj * w);
        }
        let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0f32;
        logits.iter_mut().for_each(|l| {
            *l = (*l - max).exp();
            sum += *l;
        });
        logits.iter_mut().for_each(|l| *l /= sum);
        Forward { x, h, p: logits }
    }

    fn backward(&mut self, ids: &[u32], t: usize, f: &Forward, lr: f32) {
        let (e, h_dim, v) = (self.config.embed_dim, self.config.hidden_dim, self.vocab.len());
        let mut dlogits = f.p.clone();
        dlogits[ids[t] as usize] -= 1.0;
        let clip = |g: f32| g.clamp(-5.0, 5.0);

        let mut dh = vec![0f32; h_dim];
        for j in 0..h_dim {
            let row = &mut self.w2[j * v..(j + 1) * v];
            let mut acc = 0f32;
            for (w, &d) in row.iter_mut().zip(&dlogits) {
                acc += *w * d;
                *w -= lr * clip(f.h[j] * d);
            }
            dh[j] = acc;
        }
        self.b2.iter_mut().zip(&dlogits).for_each(|(b, d)| *b -= lr * clip(*d));

        let dpre: Vec<f32> = dh.iter().zip(&f.h).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dx = vec![0f32; f.x.len()];
        for (i, &xi) in f.x.iter().enumerate() {
            let row = &mut self.w1[i * h_dim..(i + 1) * h_dim];
            let mut acc = 0f32;
            for (w, &d) in row.iter_mut().zip(&dpre) {
                acc += *w * d;
                if xi != 0.0 {
                    *w -= lr * clip(xi * d);
                }
            }
            dx[i] = acc;
        }
        self.b1.iter_mut().zip(&dpre).for_each(|(b, d)| *b -= lr * clip(*d));

        for k in 1..=WINDOW {
            let tok = if t >= k { ids[t - k] as usize } else { 0 };
            let part = &dx[(WINDOW - k) * e..(WINDOW - k + 1) * e];
            let row = &mut self.emb[tok * e..(tok + 1) * e];
            row.iter_mut().zip(part).for_each(|(w, d)| *w -= lr * clip(*d));
        }
        let n = t.max(1) as f32;
        let part = &dx[WINDOW * e..];
        for &tok in &ids[..t] {
            let row = &mut self.emb[tok as usize * e..(tok as usize + 1) * e];
            row.iter_mut().zip(part).for_each(|(w, d)| *w -= lr * clip(*d / n));
        }
    }

    fn run(&mut self, text: &str, lr: Option<f32>) -> Result<(f64, usize)> {
        let ids = self.encode(text);
        let Some(start) = self.target_start(&ids) else {
            return Ok((0.0, 0));
        };
        let e = self.config.embed_dim;
        let mut bag = vec![0f32; e];
        for &tok in &ids[..start.saturating_sub(1)] {
            let row = &self.emb[tok as usize * e..(tok as usize + 1) * e];
            bag.iter_mut().zip(row).for_each(|(b, r)| *b += r);
        }
        let mut total = 0f64;
        let mut count = 0usize;
        for t in start.max(1)..ids.len() {
            let prev = ids[t - 1] as usize;
            let row = &self.emb[prev * e..(prev + 1) * e];
            bag.iter_mut().zip(row).for_each(|(b, r)| *b += r);
            let f = self.forward(self.input(&ids, t, &bag));
            let nll = -f64::from(f.p[ids[t] as usize].max(1e-12)).ln();
            if !nll.is_finite() || f.p.iter().any(|p| p.is_nan()) {
                return Err(Error::Diverged(format!("non-finite loss at position {t}")));
            }
            total += nll;
            count += 1;
            if let Some(lr) = lr {
                self.backward(&ids, t, &f, lr);
                // The bag holds embeddings that were just updated; recompute
                // so the next position sees current weights.
                bag.iter_mut().for_each(|b| *b = 0.0);
                for &tok in &ids[..t] {
                    let row = &self.emb[tok as usize * e..(tok as usize + 1) * e];
                    bag.iter_mut().zip(row).for_each(|(b, r)| *b += r);
                }
            }
        }
        Ok((total, count))
    }
}

impl CausalLm for TinyLm {
    fn name(&self) -> String {
        format!(
            "tiny-lm-e{}-h{}-v{}",
            self.config.embed_dim,
            self.config.hidden_dim,
            self.vocab.len()
        )
    }

    fn sequence_loss(&self, text: &str) -> Result<(f64, usize)> {
        // `run` only mutates when given a learning rate.
        let mut scratch = self.clone();
        scratch.run(text, None)
    }

    fn train_sequence(&mut self, text: &str, learning_rate: f32) -> Result<(f64, usize)> {
        self.run(text, Some(learning_rate))
    }

    fn generate(&self, prompt: &str, decoding: &Decoding) -> Result<String> {
        let mut ids = self.encode(prompt);
        if ids.is_empty() {
            return Err(Error::InvalidInput("empty prompt".into()));
        }
        let e = self.config.embed_dim;
        let end = self.id(END_TAG);
        let mut rng = ChaCha8Rng::seed_from_u64(decoding.seed);
        let mut out = Vec::new();
        for _ in 0..decoding.max_new_tokens {
            let t = ids.len();
            let mut bag = vec![0f32; e];
            for &tok in &ids {
                let row = &self.emb[tok as usize * e..(tok as usize + 1) * e];
                bag.iter_mut().zip(row).for_each(|(b, r)| *b += r);
            }
            let mut ctx = ids.clone();
            ctx.push(0);
            let f = self.forward(self.input(&ctx, t, &bag));
            let mut p = f.p;
            p[0] = 0.0;
            p[1] = 0.0;
            let next = sample(&p, decoding, &mut rng);
            if next == end {
                break;
            }
            out.push(self.vocab[next as usize].clone());
            ids.push(next);
            if ids.len() > self.config.max_seq_len {
                ids.remove(0);
            }
        }
        Ok(detokenize(&out))
    }
}

fn sample(p: &[f32], decoding: &Decoding, rng: &mut ChaCha8Rng) -> u32 {
    let argmax = || {
        p.iter()
            .enumerate()
            .fold((0usize, f32::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0 as u32
    };
    if decoding.temperature <= 0.0 {
        return argmax();
    }
    let inv = 1.0 / decoding.temperature as f64;
    let mut weighted: Vec<(usize, f64)> = p
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, &x)| (i, (f64::from(x)).powf(inv)))
        .collect();
    let z: f64 = weighted.iter().map(|w| w.1).sum();
    if z <= 0.0 || !z.is_finite() {
        return argmax();
    }
    weighted.iter_mut().for_each(|w| w.1 /= z);
    weighted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mass = 0.0;
    let mut cut = weighted.len();
    for (k, w) in weighted.iter().enumerate() {
        mass += w.1;
        if mass >= decoding.top_p {
            cut = k + 1;
            break;
        }
    }
    weighted.truncate(cut);
    let z: f64 = weighted.iter().map(|w| w.1).sum();
    let mut r = rng.random::<f64>() * z;
    for (i, w) in &weighted {
        r -= w;
        if r <= 0.0 {
            return *i as u32;
        }
    }
    weighted.last().map(|w| w.0 as u32).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<String> {
        (0..20)
            .map(|i| {
                format!(
                    "{SEEKER_TAG} I feel tired {i} {RESPONDER_TAG} That sounds really hard. How are you sleeping? {END_TAG}"
                )
            })
            .collect()
    }

    #[test]
    fn loss_drops_when_training() {
        let data = corpus();
        let mut lm = TinyLm::new(&data, TinyLmConfig::default(), 1).unwrap();
        let before: f64 = data.iter().map(|d| lm.sequence_loss(d).unwrap().0).sum();
        for _ in 0..3 {
            for d in &data {
                lm.train_sequence(d, 0.05).unwrap();
            }
        }
        let after: f64 = data.iter().map(|d| lm.sequence_loss(d).unwrap().0).sum();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn greedy_generation_is_deterministic_and_learned() {
        let data = corpus();
        let mut lm = TinyLm::new(&data, TinyLmConfig::default(), 2).unwrap();
        for _ in 0..8 {
            for d in &data {
                lm.train_sequence(d, 0.05).unwrap();
            }
        }
        let d = Decoding::greedy(24);
        let prompt = format!("{SEEKER_TAG} I feel tired 3 {RESPONDER_TAG}");
        let a = lm.generate(&prompt, &d).unwrap();
        assert_eq!(a, lm.generate(&prompt, &d).unwrap());
        assert!(a.starts_with("That sounds really hard."), "{a}");
    }

    #[test]
    fn json_round_trip() {
        let lm = TinyLm::new(&corpus(), TinyLmConfig::default(), 3).unwrap();
        let back = TinyLm::from_json(&serde_json::to_string(&lm).unwrap()).unwrap();
        assert_eq!(back, lm);
        let d = Decoding::greedy(5);
        assert_eq!(back.generate(SEEKER_TAG, &d).unwrap(), lm.generate(SEEKER_TAG, &d).unwrap());
    }

    #[test]
    fn sampling_respects_seed() {
        let lm = TinyLm::new(&corpus(), TinyLmConfig::default(), 4).unwrap();
        let d = Decoding {
            max_new_tokens: 10,
            temperature: 1.0,
            top_p: 0.9,
            seed: 5,
        };
        assert_eq!(lm.generate(SEEKER_TAG, &d).unwrap(), lm.generate(SEEKER_TAG, &d).unwrap());
    }
}
