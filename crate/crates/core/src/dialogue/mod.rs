//! Session state machine, the severe-symptom gate and the pool-based reply
//! engines.

mod engines;
mod pools;
mod session;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use engines::{baseline_reply, rule_based_reply, SelectionHistory, MAX_LABEL_REPLIES, Q_RECENT};
pub use pools::{ResponsePools, Templates, LINT_PATTERNS};
pub use session::{
    handle_rephrase, open_session, respond, signal_misread, Clock, DialogueContext, EventKind, FixedClock,
    RephraseChoice, ReplyGenerator, Session, SessionState, SystemClock, TranscriptEvent,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Baseline,
    RuleBased,
    Generative,
}

impl Engine {
    pub const ALL: [Engine; 3] = [Engine::Baseline, Engine::RuleBased, Engine::Generative];

    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Baseline => "baseline",
            Engine::RuleBased => "rule_based",
            Engine::Generative => "generative",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Engine::Baseline),
            "rule_based" | "rule-based" | "rule" => Ok(Engine::RuleBased),
            "generative" => Ok(Engine::Generative),
            other => Err(Error::InvalidInput(format!(
                "unknown engine `{other}` (expected baseline, rule_based or generative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentenceKind {
    Disclaimer,
    Acknowledgment,
    Empathy,
    OpenQuestion,
    Escalation,
    FailureNotice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub kind: SentenceKind,
}

impl Sentence {
    pub fn new(text: impl Into<String>, kind: SentenceKind) -> Self {
        Self {
            text: text.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BotReply {
    pub sentences: Vec<Sentence>,
    pub labels_used: Vec<crate::classifiers::TaskName>,
    pub engine: Engine,
}

impl BotReply {
    pub fn kinds(&self) -> Vec<SentenceKind> {
        self.sentences.iter().map(|s| s.kind).collect()
    }

    pub fn is_escalation(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(|s| s.kind == SentenceKind::Escalation)
    }

    /// Sentences joined with single spaces.
    pub fn text(&self) -> String {
        self.text_without(&[])
    }

    pub fn text_without(&self, skip: &[SentenceKind]) -> String {
        self.sentences
            .iter()
            .filter(|s| !skip.contains(&s.kind))
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_names() {
        assert_eq!("rule".parse::<Engine>().unwrap(), Engine::RuleBased);
        assert_eq!("rule_based".parse::<Engine>().unwrap(), Engine::RuleBased);
        assert!("oracle".parse::<Engine>().is_err());
        assert_eq!(serde_json::to_string(&Engine::RuleBased).unwrap(), "\"rule_based\"");
    }
}
