//! Binary per-sentence judges: the common shape of the logistics filter,
//! the empathy detector and the severe-symptom gate when they are applied
//! to single sentences during curation and evaluation.

use regex::{RegexSet, RegexSetBuilder};

use crate::error::{Error, Result};

pub trait SentenceJudge: Send + Sync {
    fn name(&self) -> &str {
        "judge"
    }

    fn judge(&self, sentence: &str) -> Result<bool>;
}

impl<F> SentenceJudge for F
where
    F: Fn(&str) -> Result<bool> + Send + Sync,
{
    fn judge(&self, sentence: &str) -> Result<bool> {
        self(sentence)
    }
}

/// Volunteer sentences about coordination, introductions and resources.
pub const LOGISTICS_PATTERNS: &[&str] = &[
    r"\bcoordinator\b",
    r"\breach(ed)? out to\b",
    r"\bresources?\b",
    r"\bhttps?://",
    r"\bwww\.",
    r"\bPSI_PHONE\b",
    r"\bPSI_URL\b",
    r"\b\d{3}[-.\s]?\d{3}[-.\s]?\d{4}\b",
    r"\b[\w.+-]+@[\w-]+\.[a-z]{2,}\b",
    r"\bcrisis line\b",
    r"\bhotline\b",
    r"\bvolunteer\b",
    r"\bwebsite\b",
    r"\bwithin the next \d+ hours\b",
    r"\bin touch\b",
    r"\bsupport group\b",
    r"\bconnect you\b",
    r"\bgive advice\b",
    r"\bmedications?\b",
    r"\btherapist\b",
];

/// Advice and resource phrasing excluded from reference sets in addition to
/// the logistics filter.
pub const ADVICE_PATTERNS: &[&str] = &[
    r"\byou should\b",
    r"\byou need to\b",
    r"\bi recommend\b",
    r"\bi suggest\b",
    r"\bhave you tried\b",
    r"\bcall\b",
    r"\bvisit\b",
    r"\b\d{3}[-.\s]?\d{3}[-.\s]?\d{4}\b",
    r"\bhttps?://",
];

/// Seeker messages that only coordinate logistics with the volunteer.
pub const COORDINATION_PATTERNS: &[&str] = &[
    r"^\s*((ok(ay)?|thanks?( you)?|thank you so much|sounds good|yes|no|sure|bye)[\s,.!]*)+$",
    r"\bcoordinator\b",
    r"\bcall me\b",
    r"\bmy (phone )?number is\b",
    r"\bPSI_PHONE\b",
    r"\bwhat time\b",
    r"\bare you a (real person|bot)\b",
    r"\bstop\b\s*$",
];

/// Empathetic phrasing, used when no trained empathy head is available.
pub const EMPATHY_PATTERNS: &[&str] = &[
    r"\b(so|really|very) (hard|tough|difficult)\b",
    r"\bi('m| am) (so )?sorry\b",
    r"\bi hear you\b",
    r"\bnot alone\b",
    r"\b(understandable|makes sense|valid)\b",
    r"\bthank you for (sharing|telling|trusting)\b",
    r"\bsounds (like )?(exhausting|overwhelming|painful|hard|scary|lonely)\b",
    r"\bthat must\b",
    r"\b(doing|the) (the )?best you can\b",
    r"\bit('s| is) (ok|okay) to\b",
    r"\bcourage\b",
];

/// Case-insensitive regular-expression judge: a sentence is positive when
/// any pattern matches.
#[derive(Debug, Clone)]
pub struct PatternJudge {
    name: String,
    set: RegexSet,
    patterns: Vec<String>,
}

impl PatternJudge {
    pub fn new<S: AsRef<str>>(name: impl Into<String>, patterns: &[S]) -> Result<Self> {
        let patterns: Vec<String> = patterns.iter().map(|p| p.as_ref().to_string()).collect();
        let set = RegexSetBuilder::new(&patterns)
            .case_insensitive(true)
            .build()
            .map_err(|e| Error::InvalidInput(format!("bad pattern: {e}")))?;
        Ok(Self {
            name: name.into(),
            set,
            patterns,
        })
    }

    pub fn logistics() -> Self {
        Self::new("logistics-patterns", LOGISTICS_PATTERNS).expect("builtin patterns compile")
    }

    pub fn advice() -> Self {
        Self::new("advice-patterns", ADVICE_PATTERNS).expect("builtin patterns compile")
    }

    pub fn empathy() -> Self {
        Self::new("empathy-patterns", EMPATHY_PATTERNS).expect("builtin patterns compile")
    }

    pub fn coordination() -> Self {
        Self::new("coordination-patterns", COORDINATION_PATTERNS).expect("builtin patterns compile")
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.set.is_match(text)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }
}

impl SentenceJudge for PatternJudge {
    fn name(&self) -> &str {
        &self.name
    }

    fn judge(&self, sentence: &str) -> Result<bool> {
        Ok(self.is_match(sentence))
    }
}

/// Positive when either judge is positive; errors propagate.
pub struct AnyOf<'a>(pub Vec<&'a dyn SentenceJudge>);

impl SentenceJudge for AnyOf<'_> {
    fn name(&self) -> &str {
        "any-of"
    }

    fn judge(&self, sentence: &str) -> Result<bool> {
        for j in &self.0 {
            if j.judge(sentence)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}
