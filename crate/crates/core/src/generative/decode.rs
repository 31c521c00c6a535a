use std::sync::LazyLock;

use regex::Regex;

use crate::judge::PatternJudge;
use crate::text::split_sentences;

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<\|[^|>]*\|?>?|<\||\|>").expect("tag pattern"));

#[derive(Debug, Clone, PartialEq)]
pub struct GuardOutcome {
    pub text: String,
    pub stripped: Vec<String>,
    /// Whether anything followed a speaker tag and was cut.
    pub truncated: bool,
}

/// Cuts raw model output at the first speaker tag, then drops every
/// sentence the guard matches and, when `dedupe` is set, repeated
/// sentences. Sentences with no letters or digits are discarded.
pub fn guard_output(raw: &str, guard: &PatternJudge, dedupe: bool) -> GuardOutcome {
    let (head, truncated) = match TAG.find(raw) {
        Some(m) => (&raw[..m.start()], true),
        None => (raw, false),
    };
    let mut kept: Vec<String> = Vec::new();
    let mut stripped = Vec::new();
    for s in split_sentences(head) {
        if !s.chars().any(char::is_alphanumeric) {
            continue;
        }
        if guard.is_match(&s) {
            stripped.push(s);
        } else if dedupe && kept.iter().any(|k| k.eq_ignore_ascii_case(&s)) {
            continue;
        } else {
            kept.push(s);
        }
    }
    GuardOutcome {
        text: kept.join(" "),
        stripped,
        truncated,
    }
}
