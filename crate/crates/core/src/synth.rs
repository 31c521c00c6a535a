//! Seeded synthetic data: separable labelled sentences, small helpline
//! corpora and reference sets. Nothing here resembles real conversations;
//! it exists so every pipeline stage can run offline.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifiers::{Detectors, LabelSet, LabeledExample, TaskName};
use crate::corpus::{Conversation, Corpus, Message, ReferenceKind, ReferencePair, ReferenceSet, Speaker};
use crate::features::KeywordEncoder;
use crate::error::Result;
use crate::judge::PatternJudge;
use crate::text::word_tokens;

/// One word per task that appears only in that task's positives.
pub fn marker(task: TaskName) -> &'static str {
    match task {
        TaskName::Severe => "unsafe",
        TaskName::Empathy => "understandable",
        TaskName::DepressiveMood => "hopeless",
        TaskName::Anxiety => "anxious",
        TaskName::InterpersonalPartner => "husband",
        TaskName::InterpersonalFamily => "mother",
        TaskName::BabyBreastfeeding => "latch",
        TaskName::BabyCry => "colic",
        TaskName::BabySleep => "naps",
        TaskName::LifestressCovid => "pandemic",
        TaskName::LifestressFinance => "bills",
        TaskName::TransitionLifestyle => "identity",
        TaskName::TransitionTime => "schedule",
        TaskName::TransitionConfidence => "failing",
        TaskName::TransitionPrenatal => "trimester",
        TaskName::LacksupportPersonal => "lonely",
        TaskName::LacksupportProf => "pediatrician",
    }
}

const FILLERS: &[&str] = &[
    "today was a long day at home",
    "i made some tea this morning",
    "the weather has been grey all week",
    "we went for a short walk after lunch",
    "i keep thinking about the week ahead",
    "the house is quiet right now",
    "my cousin came by for a visit",
    "i read a few pages of a book",
    "dinner was late again tonight",
    "i sorted the laundry this afternoon",
];

/// Encoder vocabulary covering every marker and filler word.
pub fn vocabulary() -> Vec<String> {
    let mut words: Vec<String> = TaskName::ALL.iter().map(|t| marker(*t).to_string()).collect();
    for f in FILLERS {
        for w in f.split_whitespace() {
            if !words.iter().any(|x| x == w) {
                words.push(w.to_string());
            }
        }
    }
    words
}

pub fn keyword_encoder() -> KeywordEncoder {
    KeywordEncoder::new(&vocabulary())
}

/// `n` examples for `task`, a `positive_fraction` share of them positive.
/// Every example carries up to two markers of other tasks so the tasks
/// overlap; only positives carry `task`'s marker.
pub fn labeled_examples(task: TaskName, n: usize, positive_fraction: f64, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (task as u64).wrapping_mul(0x9e37_79b9));
    let n_pos = ((n as f64) * positive_fraction).round() as usize;
    let others: Vec<&str> = TaskName::ALL
        .iter()
        .filter(|t| **t != task)
        .map(|t| marker(*t))
        .collect();
    let mut out: Vec<LabeledExample> = (0..n)
        .map(|i| {
            let mut words: Vec<&str> = FILLERS.choose(&mut rng).expect("fillers").split_whitespace().collect();
            for _ in 0..rng.random_range(0..=2) {
                words.push(others.choose(&mut rng).expect("markers"));
            }
            let positive = i < n_pos;
            if positive {
                words.push(marker(task));
            }
            words.shuffle(&mut rng);
            LabeledExample::new(format!("{}.", words.join(" ")), positive)
        })
        .collect();
    out.shuffle(&mut rng);
    out
}

/// Stub detectors keyed on the synthetic markers: a task fires with score
/// 0.9 when its marker word is present. `fallback` labels are added to
/// every non-severe message with no other label.
#[derive(Debug, Clone, Default)]
pub struct MarkerDetectors {
    pub fallback: Vec<TaskName>,
}

impl MarkerDetectors {
    pub fn with_fallback(fallback: Vec<TaskName>) -> Self {
        Self { fallback }
    }
}

impl Detectors for MarkerDetectors {
    fn detect(&self, text: &str) -> Result<LabelSet> {
        let tokens = word_tokens(text);
        let has = |t: TaskName| tokens.iter().any(|w| w == marker(t));
        if has(TaskName::Severe) {
            return Ok(LabelSet::severe(0.9));
        }
        let mut positives: Vec<(TaskName, f64)> = TaskName::STATES
            .iter()
            .chain(TaskName::CONCERNS.iter())
            .filter(|t| has(**t))
            .map(|t| (*t, 0.9))
            .collect();
        if positives.is_empty() {
            positives = self.fallback.iter().map(|t| (*t, 0.6)).collect();
        }
        Ok(LabelSet::from_positives(0.1, positives))
    }

    fn fingerprint(&self) -> String {
        "synthetic-markers".into()
    }
}

pub const EMPATHY_SENTENCES: &[&str] = &[
    "That sounds so hard and your feelings make sense.",
    "I hear you and you are not alone in this.",
    "It is understandable to feel this way.",
    "You are doing the best you can.",
    "Thank you for sharing this with me.",
    "I am so sorry you are going through this.",
    "It takes courage to talk about this.",
    "Your feelings are valid.",
];

pub const LOGISTICS_SENTENCES: &[&str] = &[
    "I have reached out to our coordinator.",
    "Here are some resources for you at www.example.org today.",
    "A volunteer will be in touch within the next 24 hours.",
    "Our support group meets on Tuesdays.",
    "I can connect you with a therapist nearby.",
];

const SEEKER_TEMPLATES: &[&str] = &[
    "I feel {} since the baby came.",
    "Lately I am {} most of the day.",
    "I have been {} and I do not know why.",
    "Everything feels {} this week.",
];

const SEEKER_FEELINGS: &[&str] = &[
    "tired",
    "overwhelmed",
    "sad",
    "lost",
    "worried",
    "alone",
    "stretched thin",
    "on edge",
];

/// Judge that recognises the synthetic empathy sentences.
pub fn empathy_judge() -> PatternJudge {
    PatternJudge::new(
        "synthetic-empathy",
        &[
            r"\b(so hard|hear you|not alone|understandable|the best you can|thank you for sharing|so sorry|courage|valid|makes sense)\b",
        ],
    )
    .expect("static pattern")
}

fn msg(speaker: Speaker, text: impl Into<String>, index: usize, responder: Option<String>) -> Message {
    Message {
        speaker,
        text: text.into(),
        index,
        timestamp: None,
        responder_id: responder,
    }
}

fn seeker_line(rng: &mut ChaCha8Rng) -> String {
    SEEKER_TEMPLATES
        .choose(rng)
        .expect("templates")
        .replace("{}", SEEKER_FEELINGS.choose(rng).expect("feelings"))
}

/// `n` two-turn conversations. Each responder turn has one empathy
/// sentence; about `logistics_share` of them also carry a logistics one.
pub fn dialogue_corpus(n: usize, logistics_share: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conversations = (0..n)
        .map(|i| {
            let seeker = seeker_line(&mut rng);
            let mut reply = EMPATHY_SENTENCES.choose(&mut rng).expect("empathy").to_string();
            if rng.random_bool(logistics_share.clamp(0.0, 1.0)) {
                reply.push(' ');
                reply.push_str(LOGISTICS_SENTENCES.choose(&mut rng).expect("logistics"));
            }
            Conversation {
                id: format!("syn-{i:04}"),
                messages: vec![
                    msg(Speaker::Seeker, seeker, 0, None),
                    msg(Speaker::Responder, reply, 1, Some(format!("vol-{}", i % 5))),
                ],
            }
        })
        .collect();
    Corpus {
        conversations,
        provenance: format!("synthetic dialogue corpus (seed {seed})"),
    }
}

/// Four turns per conversation: an emotional seeker turn, an empathetic
/// reply, a coordination-only seeker turn and a logistics-only reply.
/// Stripping logistics and coordination keeps exactly half the turns.
pub fn half_logistics_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conversations = (0..n)
        .map(|i| Conversation {
            id: format!("half-{i:03}"),
            messages: vec![
                msg(Speaker::Seeker, seeker_line(&mut rng), 0, None),
                msg(Speaker::Responder, *EMPATHY_SENTENCES.choose(&mut rng).expect("empathy"), 1, None),
                msg(Speaker::Seeker, "Okay, thanks!", 2, None),
                msg(Speaker::Responder, *LOGISTICS_SENTENCES.choose(&mut rng).expect("logistics"), 3, None),
            ],
        })
        .collect();
    Corpus {
        conversations,
        provenance: "synthetic half-logistics corpus".into(),
    }
}

/// (id, turns, words) of the length-filter golden corpus.
pub const GOLDEN_SHAPES: [(&str, usize, usize); 10] = [
    ("g01", 3, 50),
    ("g02", 2, 200),
    ("g03", 4, 80),
    ("g04", 3, 49),
    ("g05", 5, 120),
    ("g06", 1, 10),
    ("g07", 6, 60),
    ("g08", 2, 49),
    ("g09", 8, 300),
    ("g10", 7, 51),
];

/// Ten conversations with exact turn and word counts; six of them have at
/// least 3 turns and 50 words.
pub fn golden_length_corpus() -> Corpus {
    let words = ["we", "talked", "about", "the", "week", "and", "felt", "better"];
    let conversations = GOLDEN_SHAPES
        .iter()
        .map(|&(id, turns, total)| {
            let base = total / turns;
            let messages = (0..turns)
                .map(|t| {
                    let k = if t == turns - 1 { total - base * (turns - 1) } else { base };
                    let text: Vec<&str> = (0..k).map(|j| words[(t + j) % words.len()]).collect();
                    let speaker = if t % 2 == 0 { Speaker::Seeker } else { Speaker::Responder };
                    msg(speaker, text.join(" "), t, None)
                })
                .collect();
            Conversation {
                id: id.to_string(),
                messages,
            }
        })
        .collect();
    Corpus {
        conversations,
        provenance: "golden length corpus".into(),
    }
}

/// `n` messages of which the first `n_severe` (before shuffling) carry a
/// severe phrase and the severe marker.
pub fn safety_suite(n: usize, n_severe: usize, seed: u64) -> Vec<(String, bool)> {
    const SEVERE: &[&str] = &[
        "I feel unsafe and I want to end it all.",
        "I am unsafe, I think about ending it.",
        "Sometimes I feel unsafe and want to hurt myself.",
        "I feel unsafe, like I might hurt my baby.",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(String, bool)> = (0..n)
        .map(|i| {
            if i < n_severe {
                (SEVERE[i % SEVERE.len()].to_string(), true)
            } else {
                (fuzz_message(&mut rng), false)
            }
        })
        .collect();
    out.shuffle(&mut rng);
    out
}

fn fuzz_message(rng: &mut ChaCha8Rng) -> String {
    let concern: Vec<&str> = TaskName::STATES
        .iter()
        .chain(TaskName::CONCERNS.iter())
        .map(|t| marker(*t))
        .collect();
    let mut words: Vec<&str> = FILLERS.choose(rng).expect("fillers").split_whitespace().collect();
    for _ in 0..rng.random_range(0..=3) {
        words.insert(rng.random_range(0..=words.len()), concern.choose(rng).expect("markers"));
    }
    let end = ["", ".", "!", "?", "..."][rng.random_range(0..5)];
    let mut s = words.join(" ");
    if rng.random_bool(0.5) {
        s = s.to_uppercase();
    }
    s.push_str(end);
    s
}

/// Non-severe messages built from filler text and state/concern markers.
pub fn fuzz_inputs(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| fuzz_message(&mut rng)).collect()
}

/// `n` (seeker input, empathetic reply) pairs.
pub fn reference_set(n: usize, kind: ReferenceKind, seed: u64) -> ReferenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|_| {
            let a = EMPATHY_SENTENCES.choose(&mut rng).expect("empathy");
            let b = EMPATHY_SENTENCES.choose(&mut rng).expect("empathy");
            ReferencePair {
                input: seeker_line(&mut rng),
                reference: if a == b { a.to_string() } else { format!("{a} {b}") },
            }
        })
        .collect();
    ReferenceSet { pairs, kind, seed }
}
