use std::collections::BTreeMap;

use regex::{Regex, RegexBuilder};

use super::{Detectors, LabelSet, TaskName};
use crate::error::{Error, Result};
use crate::hashing::sha256_hex;

/// Phrase-matching detectors. A task's score is `1 - 0.5^hits` over its
/// distinct matching phrases, and a task is positive at one hit. Useful as a
/// demonstration backend and as a deterministic stand-in for trained heads.
pub struct KeywordDetectors {
    rules: BTreeMap<TaskName, Vec<Regex>>,
    hash: String,
}

impl KeywordDetectors {
    pub fn new(rules: BTreeMap<TaskName, Vec<String>>) -> Result<Self> {
        if rules.get(&TaskName::Severe).is_none_or(|r| r.is_empty()) {
            return Err(Error::InvalidInput("keyword detectors need severe phrases".into()));
        }
        let canonical = serde_json::to_string(&rules)?;
        let mut compiled = BTreeMap::new();
        for (task, phrases) in rules {
            let res = phrases
                .iter()
                .map(|p| {
                    RegexBuilder::new(&format!(r"\b{}\b", regex::escape(p.trim())))
                        .case_insensitive(true)
                        .build()
                        .map_err(|e| Error::InvalidInput(format!("bad phrase `{p}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            compiled.insert(task, res);
        }
        Ok(Self {
            rules: compiled,
            hash: sha256_hex(canonical.as_bytes()),
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(s)?;
        let rules = raw
            .into_iter()
            .map(|(k, v)| Ok((k.parse::<TaskName>()?, v)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(rules)
    }

    /// The bundled phrase lists.
    pub fn builtin() -> Self {
        Self::from_json_str(include_str!("../../assets/keywords.json")).expect("bundled keywords are valid")
    }

    fn score(&self, task: TaskName, text: &str) -> f64 {
        let hits = self
            .rules
            .get(&task)
            .map(|rs| rs.iter().filter(|r| r.is_match(text)).count())
            .unwrap_or(0);
        1.0 - 0.5f64.powi(hits as i32)
    }
}

impl Detectors for KeywordDetectors {
    fn detect(&self, text: &str) -> Result<LabelSet> {
        let severe = self.score(TaskName::Severe, text);
        if severe >= 0.5 {
            return Ok(LabelSet::severe(severe));
        }
        let positives = TaskName::STATES
            .iter()
            .chain(TaskName::CONCERNS.iter())
            .map(|&t| (t, self.score(t, text)))
            .filter(|&(_, s)| s >= 0.5);
        Ok(LabelSet::from_positives(severe, positives))
    }

    fn fingerprint(&self) -> String {
        format!("keywords:{}", &self.hash[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_covers_every_label() {
        let k = KeywordDetectors::builtin();
        for t in TaskName::STATES.iter().chain(TaskName::CONCERNS.iter()) {
            assert!(k.rules.contains_key(t), "{t}");
        }
    }

    #[test]
    fn anxious_about_money() {
        let set = KeywordDetectors::builtin()
            .detect("I'm so anxious, we can't pay the bills and I worry about money")
            .unwrap();
        let tasks: Vec<TaskName> = set.labels().map(|l| l.task).collect();
        assert_eq!(tasks, vec![TaskName::Anxiety, TaskName::LifestressFinance]);
    }

    #[test]
    fn severe_sentence_escalates() {
        let set = KeywordDetectors::builtin()
            .detect("My break starts next week and I'm really considering ending it once and for all.")
            .unwrap();
        assert!(set.severe);
    }

    #[test]
    fn neutral_text_is_empty() {
        let set = KeywordDetectors::builtin().detect("hello there").unwrap();
        assert!(!set.severe && set.is_empty());
    }
}
