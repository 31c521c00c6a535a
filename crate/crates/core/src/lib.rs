//! Safety-gated conversational support for postpartum support seekers.
//!
//! The crate is organised around the lifecycle of the three reply engines:
//!
//! - [`corpus`]: helpline conversation model, ingestion, de-identification and
//!   the curation filters used to build training and reference data.
//! - [`features`]: sentence embedding + binary lexicon features, and
//!   back-translation augmentation for class balancing.
//! - [`classifiers`]: random-forest detectors (severe symptoms, 13 concerns,
//!   2 psychological states, empathy) with a stratified k-fold harness.
//! - [`dialogue`]: session state machine with the severe-symptom escalation
//!   gate, plus the baseline and rule-based reply engines.
//! - [`generative`]: training-pair preparation, two-stage fine-tuning of a
//!   causal language model and guarded decoding.
//! - [`evaluation`]: greedy token-matching similarity, Empathy% and report
//!   generation.

pub mod classifiers;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod generative;
pub mod judge;
pub mod synth;
pub mod text;

mod hashing;

pub use classifiers::{Detectors, LabelSet, TaskName, TrainedClassifier};
pub use corpus::{Conversation, Corpus, Message, ReferenceSet, Speaker};
pub use dialogue::{BotReply, Engine, ResponsePools, Session, SessionState, SentenceKind};
pub use error::{Error, Result};
pub use features::{FeatureVector, Featurizer, Lexicon, SentenceEncoder};
pub use judge::SentenceJudge;
