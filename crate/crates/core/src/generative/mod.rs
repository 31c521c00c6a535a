//! Generative engine: tagged training pairs, two-stage fine-tuning of a
//! causal language model, and guarded decoding.

mod decode;
mod engine;
mod finetune;
mod lm;

use serde::{Deserialize, Serialize};

pub use decode::{guard_output, GuardOutcome};
pub use engine::{format_prompt, generate_reply, GenerativeEngine};
pub use finetune::{
    fine_tune, two_stage_pipeline, Base, Checkpoint, CheckpointManifest, EpochLog, FineTuneConfig, Stage,
    TrainingMetrics, TwoStageOutcome,
};
pub use lm::{CausalLm, TinyLm, TinyLmConfig};

use crate::corpus::{Corpus, Speaker};

pub const SEEKER_TAG: &str = "<|seeker|>";
pub const RESPONDER_TAG: &str = "<|responder|>";
pub const END_TAG: &str = "<|endoftext|>";

/// Default number of preceding turns kept as context.
pub const DEFAULT_CONTEXT_TURNS: usize = 4;

pub(crate) fn tag(speaker: Speaker) -> &'static str {
    match speaker {
        Speaker::Seeker => SEEKER_TAG,
        Speaker::Responder => RESPONDER_TAG,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSequence {
    /// Preceding turns, oldest first.
    pub context: Vec<(Speaker, String)>,
    /// The responder turn to learn.
    pub target: String,
}

impl TrainingSequence {
    /// `<|seeker|> … <|responder|> target <|endoftext|>`
    pub fn to_text(&self) -> String {
        let mut s = format_prompt(&self.context);
        s.push(' ');
        s.push_str(&self.target);
        s.push(' ');
        s.push_str(END_TAG);
        s
    }
}

/// One sequence per responder turn, with up to `max_context_turns`
/// preceding turns as context.
pub fn prepare_training_pairs(corpus: &Corpus, max_context_turns: usize) -> Vec<TrainingSequence> {
    let mut out = Vec::new();
    for conv in &corpus.conversations {
        let turns: Vec<(Speaker, String)> = conv.turns().iter().map(|t| (t.speaker, t.text())).collect();
        for (i, (speaker, text)) in turns.iter().enumerate() {
            if *speaker != Speaker::Responder {
                continue;
            }
            let start = i.saturating_sub(max_context_turns);
            out.push(TrainingSequence {
                context: turns[start..i].to_vec(),
                target: text.clone(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_new_tokens: usize,
    /// Zero selects greedy decoding.
    pub temperature: f32,
    pub top_p: f64,
    pub seed: u64,
}

impl Decoding {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            max_new_tokens,
            temperature: 0.0,
            top_p: 1.0,
            seed: 0,
        }
    }
}

impl Default for Decoding {
    fn default() -> Self {
        Self {
            max_new_tokens: 40,
            temperature: 0.0,
            top_p: 0.9,
            seed: 0,
        }
    }
}
