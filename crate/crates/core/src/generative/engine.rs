use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::decode::guard_output;
use super::lm::{CausalLm, TinyLm};
use super::{tag, Decoding, Checkpoint, DEFAULT_CONTEXT_TURNS, RESPONDER_TAG};
use crate::corpus::Speaker;
use crate::dialogue::ReplyGenerator;
use crate::error::{Error, Result};
use crate::judge::PatternJudge;

/// Tagged turns followed by an open responder tag.
pub fn format_prompt(context: &[(Speaker, String)]) -> String {
    let mut parts: Vec<String> = context.iter().map(|(s, t)| format!("{} {}", tag(*s), t.trim())).collect();
    parts.push(RESPONDER_TAG.to_string());
    parts.join(" ")
}

/// Decodes one guarded reply from `checkpoint`; empty output falls back to
/// a sentence from `fallback`.
pub fn generate_reply(
    checkpoint: &Checkpoint,
    context: &[(Speaker, String)],
    decoding: &Decoding,
    fallback: &[String],
) -> Result<String> {
    let engine = GenerativeEngine::new(Arc::new(checkpoint.model.clone()), fallback.to_vec())?.with_decoding(*decoding);
    engine.generate(context, decoding.seed)
}

pub struct GenerativeEngine {
    model: Arc<TinyLm>,
    name: String,
    decoding: Decoding,
    guard: PatternJudge,
    dedupe: bool,
    fallback: Vec<String>,
    max_context_turns: usize,
    capacity: usize,
}

impl GenerativeEngine {
    pub fn new(model: Arc<TinyLm>, fallback: Vec<String>) -> Result<Self> {
        if fallback.is_empty() {
            return Err(Error::InvalidInput("generative engine needs fallback sentences".into()));
        }
        Ok(Self {
            name: model.name(),
            model,
            decoding: Decoding::default(),
            guard: PatternJudge::logistics(),
            dedupe: false,
            fallback,
            max_context_turns: DEFAULT_CONTEXT_TURNS,
            capacity: 2,
        })
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint, fallback: Vec<String>) -> Result<Self> {
        Self::new(Arc::new(checkpoint.model.clone()), fallback)
    }

    pub fn with_decoding(mut self, decoding: Decoding) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn with_guard(mut self, guard: PatternJudge) -> Self {
        self.guard = guard;
        self
    }

    pub fn with_dedupe(mut self, dedupe: bool) -> Self {
        self.dedupe = dedupe;
        self
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn with_context_turns(mut self, turns: usize) -> Self {
        self.max_context_turns = turns.max(1);
        self
    }

    /// Raw model continuation, before truncation and guarding.
    pub fn raw(&self, context: &[(Speaker, String)], seed: u64) -> Result<String> {
        let start = context.len().saturating_sub(self.max_context_turns);
        let decoding = Decoding { seed, ..self.decoding };
        self.model.generate(&format_prompt(&context[start..]), &decoding)
    }

    /// Truncates at the first tag and strips guarded sentences.
    pub fn finish(&self, raw: &str, seed: u64) -> String {
        let out = guard_output(raw, &self.guard, self.dedupe);
        if !out.stripped.is_empty() {
            tracing::debug!(stripped = out.stripped.len(), "guard removed sentences");
        }
        if out.text.trim().is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            return self.fallback[rng.random_range(0..self.fallback.len())].clone();
        }
        out.text
    }
}

impl ReplyGenerator for GenerativeEngine {
    fn name(&self) -> &str {
        &self.name
    }

    fn capacity(&self) -> usize {
        self.capacity
    }

    fn generate(&self, context: &[(Speaker, String)], seed: u64) -> Result<String> {
        let raw = self.raw(context, seed)?;
        Ok(self.finish(&raw, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{TinyLmConfig, END_TAG, SEEKER_TAG};

    fn engine() -> GenerativeEngine {
        let texts = vec![format!("{SEEKER_TAG} hi {RESPONDER_TAG} hello there. {END_TAG}")];
        let lm = TinyLm::new(&texts, TinyLmConfig::default(), 0).unwrap();
        GenerativeEngine::new(Arc::new(lm), vec!["I am here with you.".into()]).unwrap()
    }

    #[test]
    fn prompt_format() {
        let p = format_prompt(&[(Speaker::Seeker, "so tired ".into())]);
        assert_eq!(p, "<|seeker|> so tired <|responder|>");
    }

    #[test]
    fn seeker_tag_first_falls_back() {
        assert_eq!(engine().finish("<|seeker|> ok thanks", 1), "I am here with you.");
    }

    #[test]
    fn planted_resource_is_stripped() {
        let e = engine();
        let out = e.finish("That is a lot. Here are some resources: http://x.org for you.", 1);
        assert_eq!(out, "That is a lot.");
    }

    #[test]
    fn greedy_is_pure() {
        let e = engine();
        let ctx = vec![(Speaker::Seeker, "hi".to_string())];
        assert_eq!(e.generate(&ctx, 3).unwrap(), e.generate(&ctx, 3).unwrap());
    }
}
