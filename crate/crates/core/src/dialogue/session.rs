use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use super::engines::{baseline_reply, rule_based_reply, SelectionHistory, MAX_LABEL_REPLIES};
use super::pools::ResponsePools;
use super::{BotReply, Engine, Sentence, SentenceKind};
use crate::classifiers::Detectors;
use crate::corpus::Speaker;
use crate::error::{Error, Result};
use crate::text::split_sentences;

pub trait Clock: Send + Sync {
    /// RFC 3339 timestamp.
    fn now(&self) -> String;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_default()
    }
}

/// Starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct FixedClock {
    next: AtomicI64,
}

impl FixedClock {
    pub fn new(unix_seconds: i64) -> Self {
        Self {
            next: AtomicI64::new(unix_seconds),
        }
    }
}

impl Default for FixedClock {
    fn default() -> Self {
        Self::new(1_700_000_000)
    }
}

impl Clock for FixedClock {
    fn now(&self) -> String {
        let t = self.next.fetch_add(1, Ordering::SeqCst);
        OffsetDateTime::from_unix_timestamp(t)
            .ok()
            .and_then(|d| d.format(&Rfc3339).ok())
            .unwrap_or_default()
    }
}

/// Free-text reply source for the generative engine.
pub trait ReplyGenerator: Send + Sync {
    fn name(&self) -> &str;

    /// Maximum number of concurrent `generate` calls the backend supports.
    fn capacity(&self) -> usize {
        1
    }

    /// `context` holds prior turns, oldest first, ending with the seeker
    /// message being answered.
    fn generate(&self, context: &[(Speaker, String)], seed: u64) -> Result<String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Open,
    AwaitingRephrase,
    Escalated,
    Closed,
}

impl SessionState {
    pub fn accepts_input(&self) -> bool {
        matches!(self, SessionState::Open | SessionState::AwaitingRephrase)
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionState::Open => "open",
            SessionState::AwaitingRephrase => "awaiting_rephrase",
            SessionState::Escalated => "escalated",
            SessionState::Closed => "closed",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RephraseChoice {
    Rephrase,
    Stop,
}

impl FromStr for RephraseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rephrase" => Ok(RephraseChoice::Rephrase),
            "stop" => Ok(RephraseChoice::Stop),
            other => Err(Error::InvalidInput(format!("unknown choice `{other}` (expected rephrase or stop)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    UserMessage { text: String },
    UserSignal { signal: String },
    BotReply { reply: BotReply, state: SessionState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub seq: usize,
    pub at: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub engine: Engine,
    pub seed: u64,
    pub state: SessionState,
    pub created_at: String,
    /// Set when the session needs human follow-up.
    pub flagged: bool,
    pub transcript: Vec<TranscriptEvent>,
    pub history: SelectionHistory,
    pub replies: u64,
    pub disclaimer_shown: bool,
}

impl Session {
    pub fn new(id: impl Into<String>, engine: Engine, seed: u64, created_at: String) -> Self {
        Self {
            id: id.into(),
            engine,
            seed,
            state: SessionState::Open,
            created_at,
            flagged: false,
            transcript: Vec::new(),
            history: SelectionHistory::default(),
            replies: 0,
            disclaimer_shown: false,
        }
    }

    fn push(&mut self, clock: &dyn Clock, kind: EventKind) {
        self.transcript.push(TranscriptEvent {
            seq: self.transcript.len(),
            at: clock.now(),
            kind,
        });
    }

    fn reply_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.replies);
        rng
    }

    fn finish(&mut self, clock: &dyn Clock, reply: BotReply, state: SessionState) -> BotReply {
        self.state = state;
        self.replies += 1;
        self.push(
            clock,
            EventKind::BotReply {
                reply: reply.clone(),
                state,
            },
        );
        reply
    }

    /// Prior turns as `(speaker, text)`, disclaimers omitted.
    pub fn context(&self) -> Vec<(Speaker, String)> {
        self.transcript
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::UserMessage { text } => Some((Speaker::Seeker, text.clone())),
                EventKind::BotReply { reply, .. } => {
                    Some((Speaker::Responder, reply.text_without(&[SentenceKind::Disclaimer])))
                }
                EventKind::UserSignal { .. } => None,
            })
            .filter(|(_, t)| !t.is_empty())
            .collect()
    }

    pub fn last_reply(&self) -> Option<&BotReply> {
        self.transcript.iter().rev().find_map(|e| match &e.kind {
            EventKind::BotReply { reply, .. } => Some(reply),
            _ => None,
        })
    }
}

/// Opens a session with a random id.
pub fn open_session(engine: Engine, seed: u64) -> Session {
    let id = format!("{:032x}", rand::random::<u128>());
    Session::new(id, engine, seed, SystemClock.now())
}

/// Shared, read-only collaborators of a dialogue turn.
pub struct DialogueContext<'a> {
    pub detectors: &'a dyn Detectors,
    pub pools: &'a ResponsePools,
    pub generator: Option<&'a dyn ReplyGenerator>,
    pub clock: &'a dyn Clock,
    pub max_label_replies: usize,
}

impl<'a> DialogueContext<'a> {
    pub fn new(detectors: &'a dyn Detectors, pools: &'a ResponsePools, clock: &'a dyn Clock) -> Self {
        Self {
            detectors,
            pools,
            generator: None,
            clock,
            max_label_replies: MAX_LABEL_REPLIES,
        }
    }

    pub fn with_generator(mut self, generator: &'a dyn ReplyGenerator) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn with_max_label_replies(mut self, n: usize) -> Self {
        self.max_label_replies = n;
        self
    }
}

fn escalation(pools: &ResponsePools, engine: Engine) -> BotReply {
    BotReply {
        sentences: pools
            .templates
            .escalation
            .iter()
            .map(|s| Sentence::new(s.clone(), SentenceKind::Escalation))
            .collect(),
        labels_used: Vec::new(),
        engine,
    }
}

fn fail_safe(pools: &ResponsePools, engine: Engine) -> BotReply {
    let mut reply = escalation(pools, engine);
    reply
        .sentences
        .insert(0, Sentence::new(pools.templates.disclaimer.clone(), SentenceKind::Disclaimer));
    reply
}

fn tag_generated(text: &str) -> Vec<Sentence> {
    split_sentences(text)
        .into_iter()
        .map(|s| {
            let kind = if s.trim_end_matches(['"', '\'', ')']).ends_with('?') {
                SentenceKind::OpenQuestion
            } else {
                SentenceKind::Empathy
            };
            Sentence::new(s, kind)
        })
        .collect()
}

/// Handles one user message. The severe gate runs before any engine; a
/// positive gate yields an escalation-only reply and closes the session to
/// further input. A detector or generator failure yields the disclaimer
/// plus the escalation resources without changing state.
pub fn respond(session: &mut Session, text: &str, ctx: &DialogueContext<'_>) -> Result<BotReply> {
    if !session.state.accepts_input() {
        return Err(Error::InvalidState(format!("session {} is {}", session.id, session.state)));
    }
    if text.trim().is_empty() {
        return Err(Error::InvalidInput("message text is empty".into()));
    }
    if session.engine == Engine::Generative && ctx.generator.is_none() {
        return Err(Error::InvalidInput("generative engine selected but no generator configured".into()));
    }
    session.push(ctx.clock, EventKind::UserMessage { text: text.to_string() });
    let mut rng = session.reply_rng();
    let pools = ctx.pools;
    let prior = session.state;

    let labels = match ctx.detectors.detect(text) {
        Ok(l) => l,
        Err(e) => {
            tracing::error!(session = %session.id, error = %e, "detector failed; sending fail-safe reply");
            session.flagged = true;
            session.disclaimer_shown = true;
            return Ok(session.finish(ctx.clock, fail_safe(pools, session.engine), prior));
        }
    };
    if labels.severe {
        tracing::warn!(session = %session.id, score = labels.severe_score, "severe gate fired; escalating");
        session.flagged = true;
        return Ok(session.finish(ctx.clock, escalation(pools, session.engine), SessionState::Escalated));
    }

    let (mut reply, state) = match session.engine {
        Engine::Baseline => (baseline_reply(pools, &mut rng, &mut session.history), SessionState::Open),
        Engine::RuleBased if labels.is_empty() => {
            let notice = session.history.pick("failure", &pools.templates.failure, &mut rng).to_string();
            let reply = BotReply {
                sentences: vec![Sentence::new(notice, SentenceKind::FailureNotice)],
                labels_used: Vec::new(),
                engine: Engine::RuleBased,
            };
            (reply, SessionState::AwaitingRephrase)
        }
        Engine::RuleBased => (
            rule_based_reply(&labels, pools, &mut rng, &mut session.history, ctx.max_label_replies)?,
            SessionState::Open,
        ),
        Engine::Generative => {
            let generator = ctx.generator.expect("checked above");
            let seed = session.seed ^ session.replies.rotate_left(32);
            match generator.generate(&session.context(), seed) {
                Ok(out) => {
                    let mut sentences = tag_generated(&out);
                    if sentences.is_empty() {
                        let s = session.history.pick("generic_empathy", &pools.generic_empathy, &mut rng);
                        sentences.push(Sentence::new(s, SentenceKind::Empathy));
                    }
                    let reply = BotReply {
                        sentences,
                        labels_used: Vec::new(),
                        engine: Engine::Generative,
                    };
                    (reply, SessionState::Open)
                }
                Err(e) => {
                    tracing::error!(session = %session.id, error = %e, "generator failed; sending fail-safe reply");
                    session.flagged = true;
                    session.disclaimer_shown = true;
                    return Ok(session.finish(ctx.clock, fail_safe(pools, session.engine), prior));
                }
            }
        }
    };
    if !session.disclaimer_shown {
        reply
            .sentences
            .insert(0, Sentence::new(pools.templates.disclaimer.clone(), SentenceKind::Disclaimer));
        session.disclaimer_shown = true;
    }
    Ok(session.finish(ctx.clock, reply, state))
}

/// Resolves the rephrase prompt shown after a failure notice.
pub fn handle_rephrase(session: &mut Session, choice: RephraseChoice, ctx: &DialogueContext<'_>) -> Result<BotReply> {
    if session.state != SessionState::AwaitingRephrase {
        return Err(Error::InvalidState(format!(
            "session {} is {}, not awaiting_rephrase",
            session.id, session.state
        )));
    }
    let signal = match choice {
        RephraseChoice::Rephrase => "rephrase",
        RephraseChoice::Stop => "stop",
    };
    session.push(ctx.clock, EventKind::UserSignal { signal: signal.into() });
    let mut rng = session.reply_rng();
    let pools = ctx.pools;
    let (sentences, state) = match choice {
        RephraseChoice::Rephrase => {
            let prompt = session.history.pick("rephrase_prompt", &pools.templates.rephrase_prompt, &mut rng);
            (vec![Sentence::new(prompt, SentenceKind::OpenQuestion)], SessionState::Open)
        }
        RephraseChoice::Stop => {
            let close = session.history.pick("close", &pools.templates.close, &mut rng);
            (
                vec![
                    Sentence::new(close, SentenceKind::Acknowledgment),
                    Sentence::new(pools.templates.disclaimer.clone(), SentenceKind::Disclaimer),
                ],
                SessionState::Closed,
            )
        }
    };
    let reply = BotReply {
        sentences,
        labels_used: Vec::new(),
        engine: session.engine,
    };
    Ok(session.finish(ctx.clock, reply, state))
}

/// The user reports that the last reply misread them: the session asks for
/// new text through the rephrase loop.
pub fn signal_misread(session: &mut Session, ctx: &DialogueContext<'_>) -> Result<BotReply> {
    if session.state != SessionState::Open {
        return Err(Error::InvalidState(format!("session {} is {}, not open", session.id, session.state)));
    }
    if session.last_reply().is_none() {
        return Err(Error::InvalidState("nothing to correct yet".into()));
    }
    session.push(ctx.clock, EventKind::UserSignal { signal: "misread".into() });
    let mut rng = session.reply_rng();
    let notice = session.history.pick("failure", &ctx.pools.templates.failure, &mut rng);
    let reply = BotReply {
        sentences: vec![Sentence::new(notice, SentenceKind::FailureNotice)],
        labels_used: Vec::new(),
        engine: session.engine,
    };
    Ok(session.finish(ctx.clock, reply, SessionState::AwaitingRephrase))
}
