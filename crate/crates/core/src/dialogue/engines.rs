use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pools::ResponsePools;
use super::{BotReply, Engine, Sentence, SentenceKind};
use crate::classifiers::{LabelSet, TaskName};
use crate::error::Result;

/// How many of the most recent open questions may not be asked again.
pub const Q_RECENT: usize = 2;

/// Default cap on label-specific replies per rule-based message.
pub const MAX_LABEL_REPLIES: usize = 3;

/// Per-session sampling state: which entries of each pool were already
/// used in the current cycle, and the most recent open questions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionHistory {
    pub used: BTreeMap<String, Vec<usize>>,
    pub recent_questions: VecDeque<usize>,
}

impl SelectionHistory {
    /// Uniform draw without replacement from `key`'s pool; once every entry
    /// has been used the cycle restarts. Entries in `avoid` are skipped when
    /// some other entry is available.
    fn draw(&mut self, key: &str, len: usize, avoid: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let used = self.used.entry(key.to_string()).or_default();
        let fresh = |used: &Vec<usize>| -> Vec<usize> {
            (0..len).filter(|i| !used.contains(i) && !avoid.contains(i)).collect()
        };
        let mut candidates = fresh(used);
        if candidates.is_empty() {
            used.clear();
            candidates = fresh(used);
        }
        if candidates.is_empty() {
            candidates = (0..len).collect();
        }
        let pick = candidates[rng.random_range(0..candidates.len())];
        used.push(pick);
        pick
    }

    fn draw_question(&mut self, len: usize, rng: &mut ChaCha8Rng) -> usize {
        let window = if len > Q_RECENT {
            Q_RECENT
        } else {
            if len == 1 {
                tracing::warn!("single open question in pool; it will repeat");
            }
            len.saturating_sub(1)
        };
        let avoid: Vec<usize> = self.recent_questions.iter().rev().take(window).copied().collect();
        let pick = self.draw("open_questions", len, &avoid, rng);
        self.recent_questions.push_back(pick);
        while self.recent_questions.len() > Q_RECENT {
            self.recent_questions.pop_front();
        }
        pick
    }

    pub(crate) fn open_question(&mut self, pools: &ResponsePools, rng: &mut ChaCha8Rng) -> Sentence {
        let i = self.draw_question(pools.open_questions.len(), rng);
        Sentence::new(pools.open_questions[i].clone(), SentenceKind::OpenQuestion)
    }

    pub(crate) fn pick<'p>(&mut self, key: &str, pool: &'p [String], rng: &mut ChaCha8Rng) -> &'p str {
        &pool[self.draw(key, pool.len(), &[], rng)]
    }
}

/// One generic empathy sentence and one open question.
pub fn baseline_reply(pools: &ResponsePools, rng: &mut ChaCha8Rng, history: &mut SelectionHistory) -> BotReply {
    let empathy = history.pick("generic_empathy", &pools.generic_empathy, rng).to_string();
    let question = history.open_question(pools, rng);
    BotReply {
        sentences: vec![Sentence::new(empathy, SentenceKind::Empathy), question],
        labels_used: Vec::new(),
        engine: Engine::Baseline,
    }
}

/// Acknowledgment of the kept labels, one pooled reply per kept label, then
/// an open question. Labels are kept by descending score, at most
/// `max_label_replies` of them, and presented states first.
pub fn rule_based_reply(
    labels: &LabelSet,
    pools: &ResponsePools,
    rng: &mut ChaCha8Rng,
    history: &mut SelectionHistory,
    max_label_replies: usize,
) -> Result<BotReply> {
    let mut ranked: Vec<(usize, TaskName, f64)> =
        labels.labels().enumerate().map(|(i, l)| (i, l.task, l.score)).collect();
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    ranked.truncate(max_label_replies.max(1));
    // Back to presentation order: states before concerns, each by score.
    ranked.sort_by_key(|r| r.0);
    let kept: Vec<TaskName> = ranked.iter().map(|r| r.1).collect();

    let mut sentences = vec![Sentence::new(pools.acknowledgment(&kept)?, SentenceKind::Acknowledgment)];
    for task in &kept {
        let pool = pools
            .per_label
            .get(task)
            .ok_or_else(|| crate::error::Error::PoolLint(format!("no per-label replies for `{task}`")))?;
        let text = history.pick(&format!("label:{task}"), pool, rng).to_string();
        sentences.push(Sentence::new(text, SentenceKind::Empathy));
    }
    sentences.push(history.open_question(pools, rng));
    Ok(BotReply {
        sentences,
        labels_used: kept,
        engine: Engine::RuleBased,
    })
}
