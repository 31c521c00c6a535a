use std::collections::BTreeMap;
use std::path::Path;

use regex::RegexSet;
use serde::{Deserialize, Serialize};

use crate::classifiers::TaskName;
use crate::error::{Error, Result};
use crate::judge::ADVICE_PATTERNS;
use crate::text::split_sentences;

/// Patterns no pooled sentence may contain, except in the escalation and
/// disclaimer templates.
pub const LINT_PATTERNS: &[&str] = &[
    r"(?i)\bhttps?://",
    r"(?i)\bwww\.",
    r"\b\d{3}[-.\s]?\d{3}[-.\s]?\d{4}\b",
    r"\b\d{3}\b",
    r"(?i)\bmake sure (to|you)\b",
    r"(?i)\btry to\b",
    r"(?i)\byou must\b",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Templates {
    /// Must contain `{labels}`.
    pub acknowledgment: String,
    pub escalation: Vec<String>,
    pub failure: Vec<String>,
    pub disclaimer: String,
    pub rephrase_prompt: Vec<String>,
    pub close: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsePools {
    pub generic_empathy: Vec<String>,
    pub open_questions: Vec<String>,
    pub label_phrases: BTreeMap<TaskName, String>,
    pub per_label: BTreeMap<TaskName, Vec<String>>,
    pub templates: Templates,
}

impl ResponsePools {
    /// Parses and validates a pool file.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let pools: ResponsePools = serde_json::from_str(s)?;
        pools.validate()?;
        Ok(pools)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// The bundled pools.
    pub fn builtin() -> Self {
        Self::from_json_str(include_str!("../../assets/pools.json")).expect("bundled pools are valid")
    }

    /// Checks coverage and non-emptiness, then lints every sampled sentence
    /// against the URL, phone and advice patterns.
    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, v: &[String]| -> Result<()> {
            if v.is_empty() || v.iter().any(|s| s.trim().is_empty()) {
                return Err(Error::PoolLint(format!("`{name}` is empty or has blank entries")));
            }
            Ok(())
        };
        nonempty("generic_empathy", &self.generic_empathy)?;
        nonempty("open_questions", &self.open_questions)?;
        nonempty("templates.escalation", &self.templates.escalation)?;
        nonempty("templates.failure", &self.templates.failure)?;
        nonempty("templates.rephrase_prompt", &self.templates.rephrase_prompt)?;
        nonempty("templates.close", &self.templates.close)?;
        if self.templates.disclaimer.trim().is_empty() {
            return Err(Error::PoolLint("`templates.disclaimer` is empty".into()));
        }
        if !self.templates.acknowledgment.contains("{labels}") {
            return Err(Error::PoolLint("acknowledgment template lacks `{labels}`".into()));
        }
        for task in TaskName::STATES.iter().chain(TaskName::CONCERNS.iter()) {
            let replies = self
                .per_label
                .get(task)
                .ok_or_else(|| Error::PoolLint(format!("no per-label replies for `{task}`")))?;
            nonempty(task.as_str(), replies)?;
            if self.label_phrases.get(task).is_none_or(|p| p.trim().is_empty()) {
                return Err(Error::PoolLint(format!("no label phrase for `{task}`")));
            }
        }

        let mut patterns: Vec<String> = LINT_PATTERNS.iter().map(|p| p.to_string()).collect();
        patterns.extend(ADVICE_PATTERNS.iter().map(|p| format!("(?i){p}")));
        let lint = RegexSet::new(&patterns).map_err(|e| Error::PoolLint(e.to_string()))?;
        let mut sampled: Vec<(&str, &String)> = Vec::new();
        sampled.extend(self.generic_empathy.iter().map(|s| ("generic_empathy", s)));
        sampled.extend(self.open_questions.iter().map(|s| ("open_questions", s)));
        sampled.extend(self.templates.failure.iter().map(|s| ("templates.failure", s)));
        sampled.extend(self.templates.rephrase_prompt.iter().map(|s| ("templates.rephrase_prompt", s)));
        sampled.extend(self.templates.close.iter().map(|s| ("templates.close", s)));
        for (task, replies) in &self.per_label {
            sampled.extend(replies.iter().map(move |s| (task.as_str(), s)));
        }
        for (task, phrase) in &self.label_phrases {
            sampled.push((task.as_str(), phrase));
        }
        sampled.push(("templates.acknowledgment", &self.templates.acknowledgment));
        for (pool, s) in sampled {
            let hits: Vec<&str> = lint.matches(s).iter().map(|i| patterns[i].as_str()).collect();
            if !hits.is_empty() {
                return Err(Error::PoolLint(format!("`{pool}` entry {s:?} matches {}", hits.join(", "))));
            }
            if split_sentences(s).len() > 1 {
                return Err(Error::PoolLint(format!("`{pool}` entry {s:?} is more than one sentence")));
            }
        }
        Ok(())
    }

    /// "It seems that you are p1, are p2 and are p3." over the given labels.
    pub fn acknowledgment(&self, labels: &[TaskName]) -> Result<String> {
        let phrases = labels
            .iter()
            .map(|t| {
                self.label_phrases
                    .get(t)
                    .map(String::as_str)
                    .ok_or_else(|| Error::PoolLint(format!("no label phrase for `{t}`")))
            })
            .collect::<Result<Vec<&str>>>()?;
        let joined = match phrases.as_slice() {
            [] => return Err(Error::InvalidInput("acknowledgment needs at least one label".into())),
            [one] => one.to_string(),
            [init @ .., last] => format!("{} and are {last}", init.join(", are ")),
        };
        Ok(self.templates.acknowledgment.replace("{labels}", &joined))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_pools_pass_lint() {
        let p = ResponsePools::builtin();
        assert_eq!(p.per_label.len(), 15);
    }

    #[test]
    fn acknowledgment_wording() {
        let p = ResponsePools::builtin();
        assert_eq!(
            p.acknowledgment(&[TaskName::Anxiety]).unwrap(),
            "It seems that you are feeling anxious."
        );
        assert_eq!(
            p.acknowledgment(&[TaskName::Anxiety, TaskName::LifestressFinance]).unwrap(),
            "It seems that you are feeling anxious and are having financial issues."
        );
        assert_eq!(
            p.acknowledgment(&[TaskName::DepressiveMood, TaskName::Anxiety, TaskName::BabySleep]).unwrap(),
            "It seems that you are feeling low, are feeling anxious and are dealing with sleep troubles."
        );
    }

    fn with(f: impl FnOnce(&mut ResponsePools)) -> Result<()> {
        let mut p = ResponsePools::builtin();
        f(&mut p);
        p.validate()
    }

    #[test]
    fn url_in_pool_rejected() {
        let r = with(|p| p.generic_empathy.push("See https://example.org for more.".into()));
        assert!(matches!(r, Err(Error::PoolLint(_))));
    }

    #[test]
    fn advice_in_pool_rejected() {
        assert!(with(|p| p.open_questions.push("Have you tried a warm bath?".into())).is_err());
        assert!(with(|p| p.generic_empathy.push("You should call your doctor.".into())).is_err());
    }

    #[test]
    fn missing_label_rejected() {
        assert!(with(|p| {
            p.per_label.remove(&TaskName::BabyCry);
        })
        .is_err());
    }

    #[test]
    fn empty_pool_rejected() {
        assert!(with(|p| p.open_questions.clear()).is_err());
    }

    #[test]
    fn escalation_may_name_phone_lines() {
        assert!(with(|p| p.templates.escalation.push("Call 555-123-4567 now.".into())).is_ok());
    }
}
